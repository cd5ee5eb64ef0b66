//! Adjoint sweep and total derivatives with respect to the control.
//!
//! The discrete equations of a run are the steady block `E_0(y_0, u_0)` and
//! the step blocks `E_n(y_{n-1}, y_n, u_n)`. Their Jacobian in `y` is block
//! lower bidiagonal, so the adjoint system is solved backwards:
//!
//! ```text
//! (dE_M/dy_M)^T xi_M = -dJ/dy_M
//! (dE_n/dy_n)^T xi_n = -dJ/dy_n - (dE_{n+1}/dy_n)^T xi_{n+1},   n = M-1..0
//! dJ/du_n = dJ/du_n (partial) + (dE_n/du_n)^T xi_n
//! ```

use alloc::vec;
use alloc::vec::Vec;

pub use crate::sim::ControlVector;
use crate::sim::{Simulator, Trajectory};
use crate::sparse::SparseLu;
use crate::{Error, Result};

/// Partial derivatives of a functional `J(y_0..y_M, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partials {
    /// `dJ/dy_n` for `n = 0..=M`, each of length `N_y`.
    pub state: Vec<Vec<f64>>,
    /// `dJ/du`, laid out like [`ControlVector`].
    pub control: Vec<f64>,
}

/// A differentiable scalar function of a simulated run.
pub trait TrajectoryFunctional {
    fn value(&self, sim: &Simulator, trajectory: &Trajectory) -> Result<f64>;
    fn partials(&self, sim: &Simulator, trajectory: &Trajectory) -> Result<Partials>;
}

/// Adjoint states `xi_n` for `n = 0..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub xi: Vec<Vec<f64>>,
    /// Number of transposed sparse solves performed.
    pub solves: usize,
}

fn check_partials(sim: &Simulator, trajectory: &Trajectory, state: &[Vec<f64>]) -> Result<()> {
    let m = trajectory.states.len();
    if m != sim.steps() + 1 {
        return Err(Error::DimensionMismatch { expected: sim.steps() + 1, got: m });
    }
    if state.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: state.len() });
    }
    for s in state {
        if s.len() != sim.index().len() {
            return Err(Error::DimensionMismatch { expected: sim.index().len(), got: s.len() });
        }
    }
    Ok(())
}

/// Backward sweep for the partials `dj_dy[n] = dJ/dy_n`.
pub fn adjoint_sweep(sim: &Simulator, trajectory: &Trajectory, dj_dy: &[Vec<f64>]) -> Result<AdjointState> {
    check_partials(sim, trajectory, dj_dy)?;
    let sys = sim.system();
    let m = sim.steps();
    let dt = sim.dt();
    let n_y = sim.index().len();
    let mut xi = vec![Vec::new(); m + 1];
    let mut solves = 0;
    // (dE_{n+1}/dy_n)^T xi_{n+1}
    let mut carry = vec![0.0; n_y];
    for n in (0..=m).rev() {
        let rhs: Vec<f64> = dj_dy[n].iter().zip(&carry).map(|(a, b)| -a - b).collect();
        let u = trajectory.control.at(n);
        let bc = sim.boundary(n);
        if n == 0 {
            let y0 = trajectory.state(0);
            let jac = sys.steady_jacobian(y0, u, bc, dt)?;
            xi[0] = SparseLu::factor(&jac)?.solve_transpose(&rhs)?;
            solves += 1;
        } else {
            let jac = sys.step_jacobian(trajectory.state(n - 1), trajectory.state(n), u, bc, dt)?;
            let x = SparseLu::factor(&jac.next)?.solve_transpose(&rhs)?;
            solves += 1;
            carry = jac.prev.transpose_mul_vec(&x);
            xi[n] = x;
        }
    }
    Ok(AdjointState { xi, solves })
}

/// `dJ/du_n = dJ/du_n + (dE_n/du_n)^T xi_n` for every time point and compressor.
pub fn total_gradient(
    sim: &Simulator,
    trajectory: &Trajectory,
    adjoint: &AdjointState,
    dj_du: &[f64],
) -> Result<Vec<f64>> {
    let nc = sim.index().n_compressors();
    let points = trajectory.states.len();
    if dj_du.len() != points * nc {
        return Err(Error::DimensionMismatch { expected: points * nc, got: dj_du.len() });
    }
    if adjoint.xi.len() != points {
        return Err(Error::DimensionMismatch { expected: points, got: adjoint.xi.len() });
    }
    let du = sim.system().control_jacobian();
    let mut grad = dj_du.to_vec();
    for (n, xi) in adjoint.xi.iter().enumerate() {
        let g = du.transpose_mul_vec(xi);
        for c in 0..nc {
            grad[n * nc + c] += g[c];
        }
    }
    Ok(grad)
}

/// Value and adjoint gradient of `functional` at `trajectory`.
pub fn gradient(
    sim: &Simulator,
    trajectory: &Trajectory,
    functional: &dyn TrajectoryFunctional,
) -> Result<(f64, Vec<f64>)> {
    let value = functional.value(sim, trajectory)?;
    let partials = functional.partials(sim, trajectory)?;
    let adjoint = adjoint_sweep(sim, trajectory, &partials.state)?;
    Ok((value, total_gradient(sim, trajectory, &adjoint, &partials.control)?))
}

/// Central finite differences of `functional ∘ simulate` in the listed
/// control components with step `h` (Pa).
pub fn finite_difference_gradient(
    sim: &Simulator,
    control: &ControlVector,
    functional: &dyn TrajectoryFunctional,
    components: &[usize],
    h: f64,
) -> Result<Vec<f64>> {
    let eval = |c: &ControlVector| -> Result<f64> {
        let t = sim.simulate(c)?;
        functional.value(sim, &t)
    };
    components
        .iter()
        .map(|&k| {
            if k >= control.len() {
                return Err(Error::invalid("gradient component out of range"));
            }
            let mut plus = control.clone();
            let mut minus = control.clone();
            plus.values_mut()[k] += h;
            minus.values_mut()[k] -= h;
            Ok((eval(&plus)? - eval(&minus)?) / (2.0 * h))
        })
        .collect()
}

/// `sum_n w_n . y_n + c . u`, useful for checks.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFunctional {
    pub state_weights: Vec<Vec<f64>>,
    pub control_weights: Vec<f64>,
}

impl TrajectoryFunctional for LinearFunctional {
    fn value(&self, _sim: &Simulator, trajectory: &Trajectory) -> Result<f64> {
        let mut v: f64 = self.control_weights.iter().zip(trajectory.control.values()).map(|(a, b)| a * b).sum();
        for (w, s) in self.state_weights.iter().zip(&trajectory.states) {
            v += w.iter().zip(&s.values).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(v)
    }

    fn partials(&self, _sim: &Simulator, _trajectory: &Trajectory) -> Result<Partials> {
        Ok(Partials { state: self.state_weights.clone(), control: self.control_weights.clone() })
    }
}

/// `sum_n sum_i w_{n,i} (y_{n,i} / s_i)²` plus `sum_j c_j u_j²`, with `s` the
/// state scale.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFunctional {
    pub state_weights: Vec<Vec<f64>>,
    pub control_weights: Vec<f64>,
}

impl TrajectoryFunctional for QuadraticFunctional {
    fn value(&self, sim: &Simulator, trajectory: &Trajectory) -> Result<f64> {
        let idx = sim.index();
        let mut v: f64 = self.control_weights.iter().zip(trajectory.control.values()).map(|(c, u)| c * u * u).sum();
        for (w, s) in self.state_weights.iter().zip(&trajectory.states) {
            for (i, (wi, yi)) in w.iter().zip(&s.values).enumerate() {
                let z = yi / idx.scale(i);
                v += wi * z * z;
            }
        }
        Ok(v)
    }

    fn partials(&self, sim: &Simulator, trajectory: &Trajectory) -> Result<Partials> {
        let idx = sim.index();
        let state = self
            .state_weights
            .iter()
            .zip(&trajectory.states)
            .map(|(w, s)| {
                w.iter()
                    .zip(&s.values)
                    .enumerate()
                    .map(|(i, (wi, yi))| 2.0 * wi * yi / (idx.scale(i) * idx.scale(i)))
                    .collect()
            })
            .collect();
        let control = self.control_weights.iter().zip(trajectory.control.values()).map(|(c, u)| 2.0 * c * u).collect();
        Ok(Partials { state, control })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GasNetwork, GasNode, GasNodeKind, Network, Pipe};
    use crate::sim::{BoundaryData, GasBoundary, Scenario, TimeSeries};
    use crate::{fixture, BAR};
    use alloc::collections::BTreeMap;

    /// Single pipe with two cells between a pressure and a flow boundary.
    fn toy() -> Simulator {
        let mut pipe = Pipe::new("P", "A", "B", 2000.0);
        pipe.cell_count = 2;
        let net = Network {
            gas: GasNetwork {
                nodes: vec![
                    GasNode::new("A", GasNodeKind::PressureBoundary),
                    GasNode::new("B", GasNodeKind::FlowBoundary),
                ],
                pipes: vec![pipe],
                compressors: vec![],
                constants: Default::default(),
            },
            ..Default::default()
        };
        let mut gas = BTreeMap::new();
        gas.insert("A".into(), GasBoundary::Pressure(TimeSeries::constant(50.0 * BAR)));
        gas.insert("B".into(), GasBoundary::Outflow(TimeSeries::new(vec![(0.0, 100.0), (600.0, 160.0)]).unwrap()));
        let sc = Scenario {
            horizon: 600.0,
            dt: 300.0,
            boundary: BoundaryData { gas, busses: BTreeMap::new() },
            pressure_bounds: vec![],
            u_max: 0.0,
            optimizer: Default::default(),
        };
        Simulator::new(net, &sc).unwrap()
    }

    /// Dense Gaussian elimination with partial pivoting, written out for
    /// the oracle.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap()).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
            x[k] = (b[k] - s) / a[k][k];
        }
        x
    }

    #[test]
    fn backward_recursion_matches_monolithic_solve() {
        let sim = toy();
        let traj = sim.simulate(&ControlVector::new(vec![], 0).unwrap()).unwrap();
        let ny = sim.index().len();
        let m = sim.steps();
        assert_eq!(m, 2);
        let w: Vec<Vec<f64>> = (0..=m).map(|n| (0..ny).map(|i| ((n * 7 + i * 3) % 5) as f64 - 2.0).collect()).collect();
        let adj = adjoint_sweep(&sim, &traj, &w).unwrap();
        assert_eq!(adj.solves, m + 1);

        // assemble the full (M+1) N_y square Jacobian and solve its transpose
        let big = (m + 1) * ny;
        let mut a = vec![vec![0.0; big]; big];
        let sys = sim.system();
        let d0 = sys.steady_jacobian(traj.state(0), &[], sim.boundary(0), sim.dt()).unwrap().to_dense();
        for r in 0..ny {
            for c in 0..ny {
                a[r][c] = d0[r][c];
            }
        }
        for n in 1..=m {
            let j = sys.step_jacobian(traj.state(n - 1), traj.state(n), &[], sim.boundary(n), sim.dt()).unwrap();
            let (dn, dp) = (j.next.to_dense(), j.prev.to_dense());
            for r in 0..ny {
                for c in 0..ny {
                    a[n * ny + r][n * ny + c] = dn[r][c];
                    a[n * ny + r][(n - 1) * ny + c] = dp[r][c];
                }
            }
        }
        let at: Vec<Vec<f64>> = (0..big).map(|i| (0..big).map(|j| a[j][i]).collect()).collect();
        let rhs: Vec<f64> = w.iter().flatten().map(|v| -v).collect();
        let xi = dense_solve(at, rhs);
        for n in 0..=m {
            for i in 0..ny {
                let (x, y) = (adj.xi[n][i], xi[n * ny + i]);
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "xi[{n}][{i}]: {x} vs {y}");
            }
        }
    }

    #[test]
    fn last_adjoint_depends_only_on_last_partial() {
        let sim = toy();
        let traj = sim.simulate(&ControlVector::new(vec![], 0).unwrap()).unwrap();
        let ny = sim.index().len();
        let mut w = vec![vec![0.0; ny]; 3];
        w[2][1] = 1.0;
        let a = adjoint_sweep(&sim, &traj, &w).unwrap();
        w[0][3] = 5.0;
        w[1][0] = -2.0;
        let b = adjoint_sweep(&sim, &traj, &w).unwrap();
        assert_eq!(a.xi[2], b.xi[2]);
        assert_ne!(a.xi[1], b.xi[1]);
    }

    #[test]
    fn control_only_functional_has_zero_adjoint() {
        let sim = Simulator::new(fixture::network(), &fixture::scenario()).unwrap();
        let control = sim.constant_control(2.0 * BAR);
        let traj = sim.simulate(&control).unwrap();
        let f = QuadraticFunctional {
            state_weights: vec![vec![0.0; sim.index().len()]; 49],
            control_weights: vec![1.0; 49],
        };
        let p = f.partials(&sim, &traj).unwrap();
        let adj = adjoint_sweep(&sim, &traj, &p.state).unwrap();
        assert!(adj.xi.iter().flatten().all(|&x| x == 0.0));
        let g = total_gradient(&sim, &traj, &adj, &p.control).unwrap();
        for (gj, uj) in g.iter().zip(control.values()) {
            assert_eq!(*gj, 2.0 * uj);
        }
    }

    #[test]
    fn adjoint_is_linear_in_the_functional() {
        let sim = toy();
        let traj = sim.simulate(&ControlVector::new(vec![], 0).unwrap()).unwrap();
        let ny = sim.index().len();
        let w1: Vec<Vec<f64>> = (0..3).map(|n| (0..ny).map(|i| (i + n) as f64).collect()).collect();
        let w2: Vec<Vec<f64>> = (0..3).map(|n| (0..ny).map(|i| 1.0 / (1 + i * n) as f64).collect()).collect();
        let (a, b) = (0.7, -1.3);
        let comb: Vec<Vec<f64>> =
            w1.iter().zip(&w2).map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect()).collect();
        let x1 = adjoint_sweep(&sim, &traj, &w1).unwrap();
        let x2 = adjoint_sweep(&sim, &traj, &w2).unwrap();
        let xc = adjoint_sweep(&sim, &traj, &comb).unwrap();
        for n in 0..3 {
            for i in 0..ny {
                let lin = a * x1.xi[n][i] + b * x2.xi[n][i];
                assert!((xc.xi[n][i] - lin).abs() <= 1e-10 * lin.abs().max(1e-6));
            }
        }
    }

    #[test]
    fn quadratic_functional_gradient_matches_finite_differences() {
        let sim = Simulator::new(fixture::network(), &fixture::scenario()).unwrap();
        let control = sim.constant_control(2.0 * BAR);
        let traj = sim.simulate(&control).unwrap();
        let ny = sim.index().len();
        let s25 = sim.system().network().node_index("S25").unwrap();
        let mut w = vec![vec![0.0; ny]; 49];
        for (n, wn) in w.iter_mut().enumerate() {
            wn[sim.index().node(s25)] = 1e-3 * (1.0 + n as f64 / 48.0);
            wn[5] = 1e-4;
        }
        let f = QuadraticFunctional { state_weights: w, control_weights: vec![1e-12; 49] };
        let (_, g) = gradient(&sim, &traj, &f).unwrap();
        let comps = [0, 5, 16, 30, 47];
        let fd = finite_difference_gradient(&sim, &control, &f, &comps, 1e3).unwrap();
        for (k, &c) in comps.iter().enumerate() {
            assert!((g[c] - fd[k]).abs() <= 1e-5 * fd[k].abs(), "component {c}: {} vs {}", g[c], fd[k]);
        }
    }
}
