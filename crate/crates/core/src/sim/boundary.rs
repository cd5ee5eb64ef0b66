use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::model::{BusKind, GasNodeKind, Network};
use crate::opt::OptimizerSettings;
use crate::power::BusSetpoint;
use crate::{Error, Result};

/// Piecewise-linear function of time given by breakpoints, held constant
/// outside the sampled interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    points: Vec<(f64, f64)>,
}

impl TimeSeries {
    /// Breakpoints `(t, value)` with strictly increasing `t`.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("time series needs at least one breakpoint"));
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::invalid("time series breakpoints must be finite"));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("time series breakpoints must be strictly increasing in time"));
        }
        Ok(TimeSeries { points })
    }

    pub fn constant(value: f64) -> Self {
        TimeSeries { points: alloc::vec![(0.0, value)] }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        let last = pts[pts.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        let k = pts.partition_point(|&(tk, _)| tk <= t);
        let (t0, v0) = pts[k - 1];
        let (t1, v1) = pts[k];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// True when all breakpoints carry the same value.
    pub fn is_constant(&self) -> bool {
        self.points.iter().all(|p| p.1 == self.points[0].1)
    }
}

/// Prescribed data at a gas boundary node.
#[derive(Debug, Clone, PartialEq)]
pub enum GasBoundary {
    /// Pressure in Pa.
    Pressure(TimeSeries),
    /// Mass flux leaving the network, kg/(m²·s) over the incident pipe.
    Outflow(TimeSeries),
}

/// Electrical data of one bus. Which two entries are needed depends on the
/// bus kind: `V, phi` at the slack, `P, V` at generators, `P, Q` at loads.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BusBoundary {
    pub p: Option<TimeSeries>,
    pub q: Option<TimeSeries>,
    pub v: Option<TimeSeries>,
    pub phi: Option<TimeSeries>,
}

/// Time-dependent boundary data keyed by node or bus id. Times in s.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryData {
    pub gas: BTreeMap<String, GasBoundary>,
    pub busses: BTreeMap<String, BusBoundary>,
}

impl BoundaryData {
    /// Drops every breakpoint after the first, giving time-constant data.
    pub fn frozen(&self) -> Self {
        let freeze = |s: &TimeSeries| TimeSeries::constant(s.points[0].1);
        let gas = self
            .gas
            .iter()
            .map(|(k, b)| {
                let b = match b {
                    GasBoundary::Pressure(s) => GasBoundary::Pressure(freeze(s)),
                    GasBoundary::Outflow(s) => GasBoundary::Outflow(freeze(s)),
                };
                (k.clone(), b)
            })
            .collect();
        let busses = self
            .busses
            .iter()
            .map(|(k, b)| {
                let b = BusBoundary {
                    p: b.p.as_ref().map(freeze),
                    q: b.q.as_ref().map(freeze),
                    v: b.v.as_ref().map(freeze),
                    phi: b.phi.as_ref().map(freeze),
                };
                (k.clone(), b)
            })
            .collect();
        BoundaryData { gas, busses }
    }
}

/// Lower pressure bound at a node, Pa.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureBound {
    pub node: String,
    pub min: f64,
}

/// Time horizon, boundary data and optimization bounds of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// s
    pub horizon: f64,
    /// s
    pub dt: f64,
    pub boundary: BoundaryData,
    pub pressure_bounds: Vec<PressureBound>,
    /// Upper control bound, Pa.
    pub u_max: f64,
    pub optimizer: OptimizerSettings,
}

impl Scenario {
    /// Number of time steps `M` with `M dt = T`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::invalid("horizon and time step must be positive"));
        }
        let m = libm::round(self.horizon / self.dt);
        if m < 1.0 || libm::fabs(m * self.dt - self.horizon) > 1e-9 * self.horizon {
            return Err(Error::invalid(format!(
                "horizon {} s is not a multiple of the time step {} s",
                self.horizon, self.dt
            )));
        }
        Ok(m as usize)
    }
}

/// Boundary values at one instant, in network order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValues {
    /// Pressure (Pa) at pressure-boundary nodes, outflow flux at
    /// flow-boundary nodes, zero elsewhere.
    pub node: Vec<f64>,
    pub bus: Vec<BusSetpoint>,
}

/// Boundary data resolved against a network.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySchedule {
    node: Vec<Option<TimeSeries>>,
    bus: Vec<(TimeSeries, TimeSeries)>,
}

impl BoundarySchedule {
    /// Checks that every boundary node and every bus has exactly the data its
    /// kind requires.
    pub fn resolve(network: &Network, data: &BoundaryData) -> Result<Self> {
        for id in data.gas.keys() {
            if network.node_index(id).is_none() {
                return Err(Error::invalid(format!("boundary data for unknown gas node {id}")));
            }
        }
        for id in data.busses.keys() {
            if network.bus_index(id).is_none() {
                return Err(Error::invalid(format!("boundary data for unknown bus {id}")));
            }
        }
        let mut node = Vec::with_capacity(network.gas.nodes.len());
        for n in &network.gas.nodes {
            let entry = data.gas.get(&n.id);
            let series = match (n.kind, entry) {
                (GasNodeKind::PressureBoundary, Some(GasBoundary::Pressure(s))) => {
                    if s.points.iter().any(|p| !(p.1 > 0.0)) {
                        return Err(Error::invalid(format!("node {}: boundary pressure must be positive", n.id)));
                    }
                    Some(s.clone())
                }
                (GasNodeKind::FlowBoundary, Some(GasBoundary::Outflow(s))) => Some(s.clone()),
                (GasNodeKind::PressureBoundary, _) => {
                    return Err(Error::invalid(format!("missing boundary pressure at node {}", n.id)))
                }
                (GasNodeKind::FlowBoundary, _) => {
                    return Err(Error::invalid(format!("missing boundary outflow at node {}", n.id)))
                }
                (_, Some(_)) => return Err(Error::invalid(format!("node {} is not a boundary node", n.id))),
                (_, None) => None,
            };
            node.push(series);
        }
        let mut bus = Vec::with_capacity(network.power.busses.len());
        for b in &network.power.busses {
            let d = data.busses.get(&b.id).cloned().unwrap_or_default();
            let need = |s: Option<TimeSeries>, name: &str| {
                s.ok_or_else(|| Error::invalid(format!("missing boundary series {name} at {:?} bus {}", b.kind, b.id)))
            };
            let pair = match b.kind {
                BusKind::Slack => (need(d.v, "V")?, need(d.phi, "phi")?),
                BusKind::Generator => (need(d.p, "P")?, need(d.v, "V")?),
                BusKind::Load => (need(d.p, "P")?, need(d.q, "Q")?),
            };
            bus.push(pair);
        }
        Ok(BoundarySchedule { node, bus })
    }

    pub fn at(&self, t: f64) -> BoundaryValues {
        BoundaryValues {
            node: self.node.iter().map(|s| s.as_ref().map_or(0.0, |s| s.value_at(t))).collect(),
            bus: self.bus.iter().map(|(a, b)| BusSetpoint { first: a.value_at(t), second: b.value_at(t) }).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    #[test]
    fn interpolation() {
        let s = TimeSeries::new(alloc::vec![(3600.0, -0.9), (5400.0, -1.8)]).unwrap();
        assert_eq!(s.value_at(0.0), -0.9);
        assert_eq!(s.value_at(3600.0), -0.9);
        assert!(libm::fabs(s.value_at(4500.0) + 1.35) < 1e-15);
        assert_eq!(s.value_at(5400.0), -1.8);
        assert_eq!(s.value_at(1e6), -1.8);
        assert!(!s.is_constant());
        assert!(TimeSeries::constant(3.0).is_constant());
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert!(TimeSeries::new(alloc::vec![]).is_err());
        assert!(TimeSeries::new(alloc::vec![(1.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(TimeSeries::new(alloc::vec![(0.0, f64::NAN)]).is_err());
    }

    #[test]
    fn fixture_resolves() {
        let net = fixture::network();
        let sc = fixture::scenario();
        assert_eq!(sc.steps().unwrap(), 48);
        let sched = BoundarySchedule::resolve(&net, &sc.boundary).unwrap();
        let n5 = net.bus_index("N5").unwrap();
        let b = sched.at(1.25 * crate::HOUR);
        assert!(libm::fabs(b.bus[n5].first + 1.35) < 1e-12);
        assert!(libm::fabs(b.bus[n5].second + 0.45) < 1e-12);
        let s25 = net.node_index("S25").unwrap();
        assert!(libm::fabs(b.node[s25] - 277.637) < 1e-3);
    }

    #[test]
    fn missing_slack_voltage_is_an_error() {
        let net = fixture::network();
        let mut sc = fixture::scenario();
        sc.boundary.busses.get_mut("N1").unwrap().v = None;
        let err = BoundarySchedule::resolve(&net, &sc.boundary).unwrap_err();
        assert!(alloc::format!("{err}").contains("V"));
    }

    #[test]
    fn wrong_node_kind_is_an_error() {
        let net = fixture::network();
        let mut sc = fixture::scenario();
        sc.boundary.gas.insert("S8".into(), GasBoundary::Outflow(TimeSeries::constant(1.0)));
        assert!(BoundarySchedule::resolve(&net, &sc.boundary).is_err());
        let mut sc = fixture::scenario();
        sc.boundary.gas.remove("S5");
        assert!(BoundarySchedule::resolve(&net, &sc.boundary).is_err());
    }

    #[test]
    fn uneven_horizon_is_rejected() {
        let mut sc = fixture::scenario();
        sc.dt = 1000.0;
        assert!(sc.steps().is_err());
    }
}
