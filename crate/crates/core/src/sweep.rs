//! Distortion-budget sweeps over several adversary priors.

use std::io::Write;

use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::format_float;
use crate::model::{expected_distortion, AdversaryPrior, PrivacyModel};
use crate::objective::{cost_posterior_limited, dc_split, lb_dc_split};
use crate::priors::{mc_expected_posterior_cost, substream, DirichletPrior};
use crate::prob::{nats_to_bits, Channel};
use crate::solver::{multistart, SolveConfig};

/// Independent seed number `stream` derived from `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    substream(seed, stream).next_u64()
}

/// Parses `a:step:b` (inclusive) or a comma-separated list.
pub fn parse_delta_list(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidConfig(format!("bad delta list '{text}'"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = text.split(':').collect();
    let out = if parts.len() == 3 {
        let (a, step, b) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || b < a {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        // Rounded so that 0:0.1:1.5 yields 0.3 rather than 0.30000000000000004.
        (0..=n).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect()
    } else if parts.len() == 1 {
        text.split(',').map(num).collect::<Result<Vec<_>>>()?
    } else {
        return Err(bad());
    };
    if out.is_empty() || out.iter().any(|d| !(*d >= 0.0)) {
        return Err(bad());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum SweepPrior {
    /// Adversary with a fixed belief.
    Point { name: String, prior: AdversaryPrior },
    /// Adversary drawn from a Dirichlet family; solved through the lower bound
    /// and scored by Monte-Carlo.
    Dirichlet { name: String, prior: DirichletPrior },
}

impl SweepPrior {
    pub fn name(&self) -> &str {
        match self {
            SweepPrior::Point { name, .. } | SweepPrior::Dirichlet { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub deltas: Vec<f64>,
    /// Solver settings; `delta` is overwritten per cell.
    pub cfg: SolveConfig,
    /// Prior draws per Monte-Carlo estimate.
    pub mc_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub prior: String,
    pub delta: f64,
    /// Minimized objective (nats): leakage, or the negated lower bound.
    pub objective: f64,
    /// Posterior cost (nats); a Monte-Carlo mean for Dirichlet families.
    pub posterior_cost: f64,
    pub std_error: Option<f64>,
    pub lower_bound: Option<f64>,
    pub distortion: f64,
    pub iterations: usize,
    pub status: String,
}

impl SweepRow {
    fn failed(prior: &str, delta: f64, err: &Error) -> Self {
        SweepRow {
            prior: prior.to_string(),
            delta,
            objective: f64::NAN,
            posterior_cost: f64::NAN,
            std_error: None,
            lower_bound: None,
            distortion: f64::NAN,
            iterations: 0,
            status: format!("failed: {err}"),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.status.starts_with("failed")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Nats,
    Bits,
}

impl Units {
    pub fn convert(self, v: f64) -> f64 {
        match self {
            Units::Nats => v,
            Units::Bits => nats_to_bits(v),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Units::Nats => "nats",
            Units::Bits => "bits",
        }
    }
}

/// Name of the always-present omniscient baseline.
pub const OMNISCIENT: &str = "omniscient";

fn nominal_name(family: &str) -> String {
    format!("nominal/{family}")
}

impl SweepReport {
    /// Rows of one prior, ordered by `δ`.
    pub fn series(&self, prior: &str) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.prior == prior).collect()
    }

    pub fn nominal_series(&self, family: &str) -> Vec<&SweepRow> {
        self.series(&nominal_name(family))
    }

    pub fn write_csv<W: Write>(&self, out: W, units: Units) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let u = units.name();
        let err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record([
            "prior".to_string(),
            "delta".into(),
            "objective_nats".into(),
            "objective_bits".into(),
            format!("posterior_cost_{u}"),
            format!("posterior_cost_std_error_{u}"),
            format!("lower_bound_{u}"),
            "distortion".into(),
            "iterations".into(),
            "status".into(),
        ])
        .map_err(err)?;
        let opt = |v: Option<f64>| v.map(|x| format_float(units.convert(x))).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.prior.clone(),
                format_float(r.delta),
                format_float(r.objective),
                format_float(nats_to_bits(r.objective)),
                format_float(units.convert(r.posterior_cost)),
                opt(r.std_error),
                opt(r.lower_bound),
                format_float(r.distortion),
                r.iterations.to_string(),
                r.status.clone(),
            ])
            .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Solved {
    channel: Channel,
    objective: f64,
    iterations: usize,
    status: &'static str,
}

fn solve_cell(model: &PrivacyModel, prior: &SweepPrior, cfg: &SolveConfig) -> Result<Solved> {
    let obj = match prior {
        SweepPrior::Point { prior, .. } => dc_split(model, prior)?,
        SweepPrior::Dirichlet { prior, .. } => lb_dc_split(model, prior)?,
    };
    let r = multistart(&obj, model, cfg)?;
    Ok(Solved { channel: r.channel, objective: r.objective, iterations: r.iterations, status: r.status.as_str() })
}

/// Solves every `(prior, δ)` cell, with the omniscient adversary always
/// included first. Each Dirichlet family also gets a `nominal/<name>` series:
/// the omniscient solution scored against that family with the same draws.
///
/// Cells run in parallel; failures are recorded in their row and the sweep
/// continues.
pub fn run_sweep(model: &PrivacyModel, priors: &[SweepPrior], spec: &SweepSpec) -> Result<SweepReport> {
    spec.cfg.validate()?;
    if spec.deltas.is_empty() {
        return Err(Error::InvalidConfig("empty delta list".into()));
    }
    let mut all = vec![SweepPrior::Point { name: OMNISCIENT.into(), prior: AdversaryPrior::omniscient(model) }];
    all.extend(priors.iter().cloned());
    let cells: Vec<(usize, usize)> = (0..all.len())
        .flat_map(|p| (0..spec.deltas.len()).map(move |d| (p, d)))
        .collect();
    let mc_seed = |p: usize| derive_seed(spec.cfg.seed, 1 + p as u64);

    let solved: Vec<Result<Solved>> = cells
        .par_iter()
        .map(|&(p, d)| {
            let cfg = SolveConfig { delta: Some(spec.deltas[d]), ..spec.cfg.clone() };
            solve_cell(model, &all[p], &cfg)
        })
        .collect();

    let score = |p: usize, d: usize, s: &Solved| -> Result<SweepRow> {
        let delta = spec.deltas[d];
        let mut row = SweepRow {
            prior: all[p].name().to_string(),
            delta,
            objective: s.objective,
            posterior_cost: f64::NAN,
            std_error: None,
            lower_bound: None,
            distortion: expected_distortion(model, &s.channel),
            iterations: s.iterations,
            status: s.status.to_string(),
        };
        match &all[p] {
            SweepPrior::Point { prior, .. } => {
                row.posterior_cost = cost_posterior_limited(model, prior, &s.channel)?;
            }
            SweepPrior::Dirichlet { prior, .. } => {
                let (mean, se) = mc_expected_posterior_cost(model, prior, &s.channel, spec.mc_samples, mc_seed(p))?;
                row.posterior_cost = mean;
                row.std_error = Some(se);
                row.lower_bound = Some(-s.objective);
            }
        }
        Ok(row)
    };

    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .zip(solved.par_iter())
        .map(|(&(p, d), s)| match s {
            Ok(s) => score(p, d, s).unwrap_or_else(|e| SweepRow::failed(all[p].name(), spec.deltas[d], &e)),
            Err(e) => SweepRow::failed(all[p].name(), spec.deltas[d], e),
        })
        .collect();

    // Nominal series: the omniscient channel (prior 0) against each family.
    let nd = spec.deltas.len();
    let nominal: Vec<SweepRow> = (1..all.len())
        .filter(|&p| matches!(all[p], SweepPrior::Dirichlet { .. }))
        .flat_map(|p| (0..nd).map(move |d| (p, d)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(p, d)| {
            let name = nominal_name(all[p].name());
            let delta = spec.deltas[d];
            let SweepPrior::Dirichlet { prior, .. } = &all[p] else { unreachable!() };
            match &solved[d] {
                Ok(s) => match mc_expected_posterior_cost(model, prior, &s.channel, spec.mc_samples, mc_seed(p)) {
                    Ok((mean, se)) => SweepRow {
                        prior: name,
                        delta,
                        objective: s.objective,
                        posterior_cost: mean,
                        std_error: Some(se),
                        lower_bound: None,
                        distortion: expected_distortion(model, &s.channel),
                        iterations: s.iterations,
                        status: s.status.to_string(),
                    },
                    Err(e) => SweepRow::failed(&name, delta, &e),
                },
                Err(e) => SweepRow::failed(&name, delta, e),
            }
        })
        .collect();
    rows.extend(nominal);

    let order = |name: &str| -> usize {
        all.iter()
            .position(|p| p.name() == name)
            .unwrap_or_else(|| all.len() + all.iter().position(|p| nominal_name(p.name()) == name).unwrap_or(0))
    };
    rows.sort_by(|a, b| order(&a.prior).cmp(&order(&b.prior)).then(a.delta.total_cmp(&b.delta)));
    Ok(SweepReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_lists() {
        let d = parse_delta_list("0:0.1:1.5").unwrap();
        assert_eq!(d.len(), 16);
        assert_eq!(d[3], 0.3);
        assert_eq!(d[15], 1.5);
        assert_eq!(parse_delta_list("0.2, 0.5").unwrap(), vec![0.2, 0.5]);
        assert!(parse_delta_list("1:0:2").is_err());
        assert!(parse_delta_list("-1").is_err());
        assert!(parse_delta_list("a").is_err());
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(1, 0), derive_seed(1, 0));
    }
}
