//! DC power-flow shift factors.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::instance::{Line, Network};

/// Branch description for building shift factors from reactances.
#[derive(Debug, Clone, Copy)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub reactance: f64,
    pub capacity: f64,
}

/// Builds a network whose shift factors come from the DC susceptance matrix with `slack`
/// as the reference bus. The network must be connected.
pub fn network_from_branches(bus_count: usize, branches: &[Branch], slack: usize) -> Result<Network> {
    if slack >= bus_count {
        return Err(Error::Invalid(format!("slack bus {slack} out of range")));
    }
    let mut b = DMatrix::<f64>::zeros(bus_count, bus_count);
    for br in branches {
        if br.reactance <= 0.0 || br.from >= bus_count || br.to >= bus_count || br.from == br.to {
            return Err(Error::Invalid(format!("bad branch {}-{}", br.from, br.to)));
        }
        let y = 1.0 / br.reactance;
        b[(br.from, br.from)] += y;
        b[(br.to, br.to)] += y;
        b[(br.from, br.to)] -= y;
        b[(br.to, br.from)] -= y;
    }
    let keep: Vec<usize> = (0..bus_count).filter(|&i| i != slack).collect();
    let n = keep.len();
    let mut red = DMatrix::<f64>::zeros(n, n);
    for (a, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            red[(a, c)] = b[(i, j)];
        }
    }
    let inv = red
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Invalid("network is not connected".into()))?;
    // angle sensitivity to injections, zero row/column at the slack
    let mut x = DMatrix::<f64>::zeros(bus_count, bus_count);
    for (a, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            x[(i, j)] = inv[(a, c)];
        }
    }
    let mut shift_factors = Vec::with_capacity(branches.len());
    for br in branches {
        let row: Vec<f64> = (0..bus_count)
            .map(|k| {
                let v = (x[(br.from, k)] - x[(br.to, k)]) / br.reactance;
                if v.abs() < 1e-12 { 0.0 } else { v }
            })
            .collect();
        shift_factors.push(row);
    }
    let lines = branches
        .iter()
        .map(|br| Line { from: br.from, to: br.to, capacity: br.capacity })
        .collect();
    Ok(Network { bus_count, lines, shift_factors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_bus_shift_factor() {
        let net = network_from_branches(
            2,
            &[Branch { from: 0, to: 1, reactance: 0.1, capacity: 25.0 }],
            1,
        )
        .unwrap();
        assert_eq!(net.shift_factors, vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn triangle_splits_flow_by_impedance() {
        let br = |f, t| Branch { from: f, to: t, reactance: 1.0, capacity: 10.0 };
        let net = network_from_branches(3, &[br(0, 1), br(1, 2), br(0, 2)], 2).unwrap();
        // injection at bus 0, withdrawal at slack 2: 2/3 direct, 1/3 via bus 1
        assert!((net.shift(2, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((net.shift(0, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((net.shift(1, 0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn disconnected_is_rejected() {
        let br = Branch { from: 0, to: 1, reactance: 1.0, capacity: 1.0 };
        assert!(network_from_branches(3, &[br], 0).is_err());
    }
}
