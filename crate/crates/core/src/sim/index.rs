use alloc::vec::Vec;
use core::ops::Range;

use crate::model::Network;

/// One scalar unknown of the coupled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Quantity {
    Density { pipe: usize, point: usize },
    Flow { pipe: usize, point: usize },
    NodePressure { node: usize },
    CompressorFlow { compressor: usize },
    Voltage { bus: usize },
    Phase { bus: usize },
    RealPower { bus: usize },
    ReactivePower { bus: usize },
}

/// Layout of the flat state vector.
///
/// Pipe blocks come first, each interleaving `(rho_j, q_j)` for
/// `j = 0..=K`. Then one pressure per gas node (Pa), one flux per compressor,
/// and finally the bus blocks `V`, `phi`, `P`, `Q`, each of length `n_bus`.
/// Equations use the same layout, so every block of rows is square.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableIndex {
    pipe_offsets: Vec<usize>,
    node_offset: usize,
    n_nodes: usize,
    compressor_offset: usize,
    n_compressors: usize,
    bus_offset: usize,
    n_busses: usize,
    kappa: f64,
}

/// Reference flux for the scaled state norm, kg/(m²·s).
pub const FLOW_SCALE: f64 = 100.0;

impl VariableIndex {
    pub fn new(network: &Network) -> Self {
        let mut pipe_offsets = Vec::with_capacity(network.gas.pipes.len() + 1);
        let mut at = 0;
        pipe_offsets.push(0);
        for p in &network.gas.pipes {
            at += 2 * (p.cell_count + 1);
            pipe_offsets.push(at);
        }
        let n_nodes = network.gas.nodes.len();
        let n_compressors = network.gas.compressors.len();
        VariableIndex {
            pipe_offsets,
            node_offset: at,
            n_nodes,
            compressor_offset: at + n_nodes,
            n_compressors,
            bus_offset: at + n_nodes + n_compressors,
            n_busses: network.power.busses.len(),
            kappa: network.gas.constants.kappa,
        }
    }

    pub fn len(&self) -> usize {
        self.bus_offset + 4 * self.n_busses
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_pipes(&self) -> usize {
        self.pipe_offsets.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_compressors(&self) -> usize {
        self.n_compressors
    }

    pub fn n_busses(&self) -> usize {
        self.n_busses
    }

    /// Interleaved `(rho, q)` block of a pipe.
    pub fn pipe_range(&self, pipe: usize) -> Range<usize> {
        self.pipe_offsets[pipe]..self.pipe_offsets[pipe + 1]
    }

    pub fn node(&self, node: usize) -> usize {
        self.node_offset + node
    }

    pub fn compressor(&self, compressor: usize) -> usize {
        self.compressor_offset + compressor
    }

    pub fn voltage(&self, bus: usize) -> usize {
        self.bus_offset + bus
    }

    pub fn phase(&self, bus: usize) -> usize {
        self.bus_offset + self.n_busses + bus
    }

    pub fn real_power(&self, bus: usize) -> usize {
        self.bus_offset + 2 * self.n_busses + bus
    }

    pub fn reactive_power(&self, bus: usize) -> usize {
        self.bus_offset + 3 * self.n_busses + bus
    }

    /// Flat position of a quantity, `None` if it does not exist.
    pub fn index(&self, q: Quantity) -> Option<usize> {
        let bus_ok = |b: usize| b < self.n_busses;
        match q {
            Quantity::Density { pipe, point } | Quantity::Flow { pipe, point } => {
                if pipe >= self.n_pipes() {
                    return None;
                }
                let r = self.pipe_range(pipe);
                let i = r.start + 2 * point + usize::from(matches!(q, Quantity::Flow { .. }));
                (i < r.end).then_some(i)
            }
            Quantity::NodePressure { node } => (node < self.n_nodes).then(|| self.node(node)),
            Quantity::CompressorFlow { compressor } => {
                (compressor < self.n_compressors).then(|| self.compressor(compressor))
            }
            Quantity::Voltage { bus } => bus_ok(bus).then(|| self.voltage(bus)),
            Quantity::Phase { bus } => bus_ok(bus).then(|| self.phase(bus)),
            Quantity::RealPower { bus } => bus_ok(bus).then(|| self.real_power(bus)),
            Quantity::ReactivePower { bus } => bus_ok(bus).then(|| self.reactive_power(bus)),
        }
    }

    /// Inverse of [`VariableIndex::index`].
    pub fn quantity(&self, i: usize) -> Option<Quantity> {
        if i < self.node_offset {
            let pipe = self.pipe_offsets.partition_point(|&o| o <= i) - 1;
            let local = i - self.pipe_offsets[pipe];
            let point = local / 2;
            return Some(if local.is_multiple_of(2) {
                Quantity::Density { pipe, point }
            } else {
                Quantity::Flow { pipe, point }
            });
        }
        if i < self.compressor_offset {
            return Some(Quantity::NodePressure { node: i - self.node_offset });
        }
        if i < self.bus_offset {
            return Some(Quantity::CompressorFlow { compressor: i - self.compressor_offset });
        }
        if i >= self.len() {
            return None;
        }
        let k = i - self.bus_offset;
        let bus = k % self.n_busses;
        Some(match k / self.n_busses {
            0 => Quantity::Voltage { bus },
            1 => Quantity::Phase { bus },
            2 => Quantity::RealPower { bus },
            _ => Quantity::ReactivePower { bus },
        })
    }

    /// Typical magnitude of unknown `i`: 1 for densities and electrical
    /// quantities, [`FLOW_SCALE`] for fluxes, `kappa` for node pressures.
    pub fn scale(&self, i: usize) -> f64 {
        match self.quantity(i) {
            Some(Quantity::Flow { .. } | Quantity::CompressorFlow { .. }) => FLOW_SCALE,
            Some(Quantity::NodePressure { .. }) => self.kappa,
            _ => 1.0,
        }
    }

    /// Max-norm of `a - b` in scaled units.
    pub fn scaled_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).enumerate().fold(0.0f64, |m, (i, (x, y))| m.max(libm::fabs(x - y) / self.scale(i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    #[test]
    fn bijective_on_fixture() {
        let net = fixture::network();
        let idx = VariableIndex::new(&net);
        let points: usize = net.gas.pipes.iter().map(|p| p.cell_count + 1).sum();
        assert_eq!(idx.len(), 2 * points + 7 + 1 + 36);
        let mut seen = alloc::vec![false; idx.len()];
        for i in 0..idx.len() {
            let q = idx.quantity(i).unwrap();
            assert_eq!(idx.index(q), Some(i));
            seen[i] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(idx.quantity(idx.len()), None);
        assert_eq!(idx.index(Quantity::Voltage { bus: 9 }), None);
        assert_eq!(idx.index(Quantity::Flow { pipe: 0, point: net.gas.pipes[0].cell_count + 1 }), None);
    }

    #[test]
    fn scales() {
        let net = fixture::network();
        let idx = VariableIndex::new(&net);
        assert_eq!(idx.scale(0), 1.0);
        assert_eq!(idx.scale(1), FLOW_SCALE);
        assert_eq!(idx.scale(idx.node(0)), 115_600.0);
        assert_eq!(idx.scale(idx.compressor(0)), FLOW_SCALE);
        assert_eq!(idx.scale(idx.reactive_power(8)), 1.0);
    }
}
