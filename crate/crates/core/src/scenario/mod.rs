//! Building non-base scenarios: deviation scaling, scenario reduction, outage injection.

pub mod synthetic;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{MarketInstance, Scenario};

/// Member profiles over a fixed set of (entity, period) points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEnsemble {
    pub entities: Vec<String>,
    pub periods: usize,
    /// `members[n][e * periods + t]`
    pub members: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
}

impl ProfileEnsemble {
    /// Equiprobable ensemble. Panics if a member has the wrong length.
    pub fn uniform(entities: Vec<String>, periods: usize, members: Vec<Vec<f64>>) -> Self {
        let dim = entities.len() * periods;
        assert!(members.iter().all(|m| m.len() == dim), "member length must be entities * periods");
        let p = 1.0 / members.len().max(1) as f64;
        let probabilities = vec![p; members.len()];
        ProfileEnsemble { entities, periods, members, probabilities }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entities.len() * self.periods
    }

    pub fn index(&self, entity: usize, period: usize) -> usize {
        entity * self.periods + period
    }

    pub fn total_probability(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Probability-weighted mean at every point.
    pub fn mean(&self) -> Vec<f64> {
        let total = self.total_probability();
        let mut mu = vec![0.0; self.dim()];
        for (m, p) in self.members.iter().zip(&self.probabilities) {
            for (a, v) in mu.iter_mut().zip(m) {
                *a += p * v;
            }
        }
        if total > 0.0 {
            mu.iter_mut().for_each(|a| *a /= total);
        }
        mu
    }

    /// Probability-weighted (population) standard deviation at every point.
    pub fn std(&self) -> Vec<f64> {
        let mu = self.mean();
        let total = self.total_probability();
        let mut var = vec![0.0; self.dim()];
        for (m, p) in self.members.iter().zip(&self.probabilities) {
            for ((a, v), u) in var.iter_mut().zip(m).zip(&mu) {
                *a += p * (v - u) * (v - u);
            }
        }
        var.iter().map(|v| if total > 0.0 { (v / total).max(0.0).sqrt() } else { 0.0 }).collect()
    }

    /// Reads `member,entity,hour,value` rows. Members and entities are numbered in order of
    /// first appearance; every member must cover every point.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            member: usize,
            entity: String,
            hour: usize,
            value: f64,
        }
        let mut rdr = csv::Reader::from_reader(input);
        let rows: Vec<Row> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        let mut entities: Vec<String> = Vec::new();
        let mut periods = 0;
        let mut members = 0;
        for r in &rows {
            if !entities.contains(&r.entity) {
                entities.push(r.entity.clone());
            }
            periods = periods.max(r.hour + 1);
            members = members.max(r.member + 1);
        }
        let dim = entities.len() * periods;
        let mut data = vec![vec![f64::NAN; dim]; members];
        for r in &rows {
            let e = entities.iter().position(|x| *x == r.entity).unwrap_or_default();
            data[r.member][e * periods + r.hour] = r.value;
        }
        if let Some(n) = data.iter().position(|m| m.iter().any(|v| v.is_nan())) {
            return Err(Error::Dimension(format!("member {n} does not cover every entity and hour")));
        }
        Ok(ProfileEnsemble::uniform(entities, periods, data))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["member", "entity", "hour", "value"])?;
        for (n, m) in self.members.iter().enumerate() {
            for (e, id) in self.entities.iter().enumerate() {
                for t in 0..self.periods {
                    w.write_record([n.to_string(), id.clone(), t.to_string(), m[e * self.periods + t].to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Rescales every point to `X_new = k * mu * (X - mu) / sigma`, so the result is centered
/// with standard deviation `k * |mu|`. Points with zero spread map to 0.
pub fn scale_deviation(ens: &ProfileEnsemble, k: f64) -> ProfileEnsemble {
    scale_deviation_by_entity(ens, &vec![k; ens.entities.len()])
}

/// [`scale_deviation`] with a separate factor for each entity.
pub fn scale_deviation_by_entity(ens: &ProfileEnsemble, k: &[f64]) -> ProfileEnsemble {
    assert_eq!(k.len(), ens.entities.len(), "one factor per entity");
    let mu = ens.mean();
    let sigma = ens.std();
    let members = ens
        .members
        .iter()
        .map(|m| {
            m.iter()
                .enumerate()
                .map(|(i, &x)| {
                    let f = k[i / ens.periods];
                    if sigma[i] > 0.0 {
                        f * mu[i].abs() * (x - mu[i]) / sigma[i]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    ProfileEnsemble { members, ..ens.clone() }
}

/// One kept member after reduction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Representative {
    /// Index of the kept member in the input ensemble.
    pub member: usize,
    pub values: Vec<f64>,
    pub probability: f64,
    /// Input members merged into this one, itself included.
    pub absorbed: Vec<usize>,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Fast-forward selection: greedily keeps the member that most lowers the
/// probability-weighted distance from the discarded members to their nearest kept one,
/// then moves every discarded member's probability to its nearest kept member.
/// Ties go to the lower index, so the result depends only on the input order.
pub fn reduce_scenarios(ens: &ProfileEnsemble, target: usize) -> Vec<Representative> {
    let n = ens.len();
    let target = target.min(n);
    if target == 0 {
        return Vec::new();
    }
    let dist: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| distance(&ens.members[i], &ens.members[j])).collect()).collect();
    let mut kept: Vec<usize> = Vec::with_capacity(target);
    let mut is_kept = vec![false; n];
    // distance from each member to the nearest kept one
    let mut nearest = vec![f64::INFINITY; n];
    while kept.len() < target {
        let mut best = None;
        let mut best_score = f64::INFINITY;
        for c in (0..n).filter(|&c| !is_kept[c]) {
            let score: f64 = (0..n)
                .filter(|&j| !is_kept[j] && j != c)
                .map(|j| ens.probabilities[j] * nearest[j].min(dist[j][c]))
                .sum();
            if score < best_score {
                best_score = score;
                best = Some(c);
            }
        }
        let c = best.expect("a candidate remains while kept < n");
        kept.push(c);
        is_kept[c] = true;
        for j in 0..n {
            nearest[j] = nearest[j].min(dist[j][c]);
        }
    }
    kept.sort_unstable();
    let mut reps: Vec<Representative> = kept
        .iter()
        .map(|&c| Representative { member: c, values: ens.members[c].clone(), probability: 0.0, absorbed: Vec::new() })
        .collect();
    for j in 0..n {
        let r = if is_kept[j] {
            kept.binary_search(&j).expect("kept member is listed")
        } else {
            let mut r = 0;
            for (q, &c) in kept.iter().enumerate() {
                if dist[j][c] < dist[j][kept[r]] {
                    r = q;
                }
            }
            r
        };
        reps[r].probability += ens.probabilities[j];
        reps[r].absorbed.push(j);
    }
    reps
}

/// Probability-weighted average of the representatives.
pub fn weighted_average(reps: &[Representative]) -> Vec<f64> {
    let total: f64 = reps.iter().map(|r| r.probability).sum();
    let dim = reps.first().map_or(0, |r| r.values.len());
    let mut avg = vec![0.0; dim];
    for r in reps {
        for (a, v) in avg.iter_mut().zip(&r.values) {
            *a += r.probability * v / total;
        }
    }
    avg
}

/// Copy of `scenario` with `units` added to its outage set.
pub fn inject_outage(inst: &MarketInstance, scenario: &Scenario, units: &[&str]) -> Result<Scenario> {
    let mut s = scenario.clone();
    for &id in units {
        if inst.thermal_index(id).is_none() {
            return Err(Error::UnknownUnit(id.to_string()));
        }
        if !s.outages.iter().any(|o| o == id) {
            s.outages.push(id.to_string());
        }
    }
    Ok(s)
}

/// Copy of `scenario` with `units` removed from its outage set.
pub fn remove_outage(inst: &MarketInstance, scenario: &Scenario, units: &[&str]) -> Result<Scenario> {
    let mut s = scenario.clone();
    for &id in units {
        if inst.thermal_index(id).is_none() {
            return Err(Error::UnknownUnit(id.to_string()));
        }
        s.outages.retain(|o| o != id);
    }
    Ok(s)
}

/// Diagonal of the outage matrix X for `scenario`.
pub fn outage_diagonal(inst: &MarketInstance, scenario: &Scenario) -> Vec<bool> {
    inst.thermal.iter().map(|u| scenario.outages.contains(&u.id)).collect()
}

/// Spreads a scalar net-load deviation `delta` (per unit of base value) over scenario k
/// at period t: each load deviates by `delta * d`, and each renewable is short by
/// `delta * W` when `delta > 0` and long by `|delta| * W` otherwise.
pub fn apply_net_load_deviation(inst: &mut MarketInstance, k: usize, t: usize, delta: f64) -> Result<()> {
    if k >= inst.scenarios.len() || t >= inst.periods {
        return Err(Error::Dimension(format!("scenario {k} period {t} out of range")));
    }
    for l in inst.loads.iter_mut() {
        l.deviation[k][t] = delta * l.demand[t];
    }
    for u in inst.renewables.iter_mut() {
        let w = u.available[t];
        if delta > 0.0 {
            u.deficit[k][t] = (delta * w).min(w);
            u.surplus[k][t] = 0.0;
        } else {
            u.deficit[k][t] = 0.0;
            u.surplus[k][t] = -delta * w;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::build_two_bus_fixture;

    fn small() -> ProfileEnsemble {
        ProfileEnsemble::uniform(
            vec!["a".into(), "b".into()],
            1,
            vec![vec![1.0, 10.0], vec![3.0, 10.0], vec![5.0, 10.0], vec![7.0, 10.0]],
        )
    }

    #[test]
    fn mean_maps_to_zero_and_flat_points_pass_through() {
        let e = ProfileEnsemble::uniform(vec!["a".into()], 1, vec![vec![4.0], vec![4.0]]);
        assert_eq!(scale_deviation(&e, 0.1).members, vec![vec![0.0], vec![0.0]]);
        let s = scale_deviation(&small(), 0.05);
        let sd = s.std();
        assert!((sd[0] - 0.05 * 4.0).abs() < 1e-12);
        assert_eq!(sd[1], 0.0);
        assert!(s.mean()[0].abs() < 1e-12);
        let s = scale_deviation_by_entity(&small(), &[0.2, 0.5]);
        assert!((s.std()[0] - 0.2 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn full_reduction_is_identity() {
        let e = small();
        let r = reduce_scenarios(&e, 4);
        assert_eq!(r.len(), 4);
        for (i, rep) in r.iter().enumerate() {
            assert_eq!(rep.member, i);
            assert_eq!(rep.probability, 0.25);
        }
    }

    #[test]
    fn identical_members_merge() {
        let e = ProfileEnsemble::uniform(vec!["a".into()], 1, vec![vec![2.0], vec![2.0]]);
        let r = reduce_scenarios(&e, 1);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].probability, 1.0);
        assert_eq!(r[0].absorbed, vec![0, 1]);
    }

    #[test]
    fn outage_round_trip() {
        let inst = build_two_bus_fixture();
        let s6 = inst.scenarios[5].clone();
        assert_eq!(outage_diagonal(&inst, &s6), vec![true, false, false]);
        let clean = remove_outage(&inst, &s6, &["G1"]).unwrap();
        assert_eq!(outage_diagonal(&inst, &clean), vec![false; 3]);
        assert_eq!(inject_outage(&inst, &clean, &["G1"]).unwrap(), s6);
        assert_eq!(inject_outage(&inst, &clean, &[]).unwrap(), clean);
        assert!(matches!(inject_outage(&inst, &clean, &["G9"]), Err(Error::UnknownUnit(_))));
    }

    #[test]
    fn csv_round_trip() {
        let e = small();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        assert_eq!(ProfileEnsemble::read_csv(buf.as_slice()).unwrap(), e);
    }
}
