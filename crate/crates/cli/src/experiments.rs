//! The built-in experiments.

use std::sync::Arc;

use growlab_core::bounds::{
    frozen_recurrence_experiment, lower_bound_check, sequence_profiles, soundness_scan, transience_report, zd_phase,
    BoundContext, FrozenRecurrenceConfig, LowerBoundConfig,
};
use growlab_core::evoset::{run_plain, run_size_biased, SizeBiasedParams};
use growlab_core::families::frozen::{FrozenNestedFamily, FrozenNestedParams};
use growlab_core::families::merging::{decimal_ratio, MergingChainSchedule};
use growlab_core::isoperimetry::{exact_profile, DEFAULT_ENUMERATION_CAP};
use growlab_core::merging::{certify_constraints, excursion_scan, merging_distances, two_state_analysis, MergingOptions, TwoStateSummary};
use growlab_core::scalar::Scalar;
use growlab_core::sequence::validate_monotone;
use growlab_core::walk::{return_stats, simulate, Evolver};
use growlab_core::{Error, GraphSequence, VertexId};
use num::BigRational;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::acceptance;
use crate::error::CliError;
use crate::experiment::{cell, opt_cell, ExperimentRegistry, Outcome, RunContext, Table, TypedExperiment};

pub fn builtin() -> ExperimentRegistry {
    let mut r = ExperimentRegistry::default();
    r.register(Box::new(Validate));
    r.register(Box::new(Evolve));
    r.register(Box::new(Simulate));
    r.register(Box::new(EvoSet));
    r.register(Box::new(Isoperimetry));
    r.register(Box::new(Bounds));
    r.register(Box::new(Merging));
    r.register(Box::new(LowerBound));
    r.register(Box::new(FrozenRecurrence));
    r.register(Box::new(Acceptance));
    r
}

fn two_vertex_block() -> Value {
    json!({"family": "two_vertex"})
}

fn path_block() -> Value {
    json!({"family": "path"})
}

fn start(seq: &dyn GraphSequence, x0: Option<u64>) -> VertexId {
    x0.map_or_else(|| seq.origin(), VertexId)
}

fn horizon_of(seq: &dyn GraphSequence, horizon: Option<usize>) -> usize {
    horizon.unwrap_or_else(|| seq.horizon())
}

fn budget_hit(e: &Error) -> bool {
    matches!(e, Error::Budget { .. })
}

pub struct Validate;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateParams {
    #[serde(default = "path_block")]
    pub family: Value,
    #[serde(default)]
    pub horizon: Option<usize>,
}

impl TypedExperiment for Validate {
    type Params = ValidateParams;
    const NAME: &'static str = "validate";
    const ABOUT: &'static str = "check edge-wise monotonicity, laziness and degrees of a family";

    fn run_typed(&self, p: &ValidateParams, ctx: &RunContext) -> Result<Outcome, CliError> {
        let seq = ctx.family(&p.family)?;
        let report = validate_monotone(seq.as_ref(), horizon_of(seq.as_ref(), p.horizon))?;
        let mut table = Table::new("violations", &["t", "x", "y", "before", "after"]);
        if let Some(v) = &report.violation {
            table.push(vec![v.t.to_string(), v.x.to_string(), v.y.to_string(), v.before.to_string(), v.after.to_string()]);
        }
        let mut out = Outcome::default().with_table(table);
        out.set("passed", report.passed());
        out.set("report", &report);
        out.set("family", seq.metadata());
        Ok(out)
    }
}

pub struct Evolve;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveParams {
    #[serde(default = "two_vertex_block")]
    pub family: Value,
    #[serde(default)]
    pub x0: Option<u64>,
    /// Times to tabulate; defaults to the family horizon.
    #[serde(default)]
    pub times: Vec<usize>,
}

fn evolve_rows<S: Scalar>(
    seq: &dyn GraphSequence,
    x0: VertexId,
    times: &[usize],
    ctx: &RunContext,
    fmt: impl Fn(&S) -> String,
    table: &mut Table,
) -> Result<(bool, usize, f64), CliError> {
    let mut ev = Evolver::<S>::new(seq, 0, x0, ctx.budgets)?;
    for &t in times {
        if let Err(e) = ev.advance_to(t) {
            if budget_hit(&e) {
                log::warn!("{e}");
                return Ok((true, ev.t(), ev.max_drift()));
            }
            return Err(e.into());
        }
        for (y, p) in ev.current().support() {
            table.push(vec![t.to_string(), y.to_string(), fmt(p)]);
        }
    }
    Ok((false, ev.t(), ev.max_drift()))
}

impl TypedExperiment for Evolve {
    type Params = EvolveParams;
    const NAME: &'static str = "evolve";
    const ABOUT: &'static str = "exact distribution P(0, x0; t, .) by sparse kernel products";

    fn run_typed(&self, p: &EvolveParams, ctx: &RunContext) -> Result<Outcome, CliError> {
        let seq = ctx.family(&p.family)?;
        let x0 = start(seq.as_ref(), p.x0);
        let mut times = if p.times.is_empty() { vec![seq.horizon()] } else { p.times.clone() };
        times.sort_unstable();
        times.dedup();
        let mut table = Table::new("distribution", &["t", "y", "p"]);
        let (exhausted, reached, drift) = if ctx.exact {
            evolve_rows::<BigRational>(seq.as_ref(), x0, &times, ctx, |r| r.to_string(), &mut table)?
        } else {
            evolve_rows::<f64>(seq.as_ref(), x0, &times, ctx, |x| cell(*x), &mut table)?
        };
        let mut out = Outcome { budget_exhausted: exhausted, ..Outcome::default() }.with_table(table);
        out.set("x0", x0.0);
        out.set("t_reached", reached);
        out.set("max_mass_drift", drift);
        out.set("budget_exhausted", exhausted);
        Ok(out)
    }
}

pub struct Simulate;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    #[serde(default = "two_vertex_block")]
    pub family: Value,
    #[serde(default)]
    pub x0: Option<u64>,
    /// Times for the empirical marginals; defaults to the family horizon.
    #[serde(default)]
    pub times: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    /// Strictly increasing `k` grid for the return statistics.
    #[serde(default)]
    pub return_ks: Vec<usize>,
}

fn default_replicates() -> u64 {
    10_000
}

impl TypedExperiment for Simulate {
    type Params = SimulateParams;
    const NAME: &'static str = "simulate";
    const ABOUT: &'static str = "Monte Carlo walkers: one-point marginals and return statistics";

    fn run_typed(&self, p: &SimulateParams, ctx: &RunContext) -> Result<Outcome, CliError> {
        let seq = ctx.family(&p.family)?;
        let x0 = start(seq.as_ref(), p.x0);
        let mut times = if p.times.is_empty() { vec![seq.horizon()] } else { p.times.clone() };
        times.sort_unstable();
        times.dedup();
        let m = simulate(seq.as_ref(), x0, &times, p.replicates, ctx.seed, ctx.budgets)?;
        let mut table = Table::new("marginals", &["t", "y", "p", "se"]);
        for (k, &t) in times.iter().enumerate() {
            let mut ys: Vec<VertexId> = m.counts[k].keys().copied().collect();
            ys.sort_unstable();
            for y in ys {
                table.push(vec![t.to_string(), y.to_string(), cell(m.prob(k, y)), cell(m.std_err(k, y))]);
            }
        }
        let mut out = Outcome::default().with_table(table);
        if !p.return_ks.is_empty() {
            // an independent stream family for the return walkers
            let stats = return_stats(seq.as_ref(), x0, &p.return_ks, p.replicates, ctx.seed ^ 0x5EED_0001, ctx.budgets)?;
            let mut rt = Table::new("return_stats", &["k", "E_N0", "pz_ratio", "E_N0_se", "method"]);
            for s in &stats {
                let method = serde_json::to_value(s.method).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
                rt.push(vec![s.k.to_string(), cell(s.mean), cell(s.pz_ratio), cell(s.mean_se), method]);
            }
            out = out.with_table(rt);
        }
        out.set("x0", x0.0);
        out.set("replicates", p.replicates);
        Ok(out)
    }
}

pub struct EvoSet;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeBiasedBlock {
    pub alpha: f64,
    #[serde(default)]
    pub s: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvoSetParams {
    #[serde(default = "path_block")]
    pub family: Value,
    #[serde(default)]
    pub x0: Option<u64>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    /// Also run the size-biased process and its contraction check.
    #[serde(default)]
    pub size_biased: Option<SizeBiasedBlock>,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_ENUMERATION_CAP
}

impl TypedExperiment for EvoSet {
    type Params = EvoSetParams;
    const NAME: &'static str = "evoset";
    const ABOUT: &'static str = "evolving-set identity, weight martingale and size-biased contraction";

    fn run_typed(&self, p: &EvoSetParams, ctx: &RunContext) -> Result<Outcome, CliError> {
        let seq = ctx.family(&p.family)?;
        let x0 = start(seq.as_ref(), p.x0);
        let horizon = horizon_of(seq.as_ref(), p.horizon);
        let est = run_plain(seq.as_ref(), x0, horizon, p.replicates, ctx.seed, ctx.budgets)?;
        let mut identity = Table::new("identity", &["t", "y", "estimate", "se", "exact", "z"]);
        let mut ev = Evolver::<f64>::new(seq.as_ref(), 0, x0, ctx.budgets)?;
        let mut worst_z = 0.0f64;
        for t in 0..=horizon {
            ev.advance_to(t)?;
            let g = seq.snapshot_at(t)?;
            for i in 0..g.len() {
                let y = g.id(i);
                let (e, se) = est.walk_estimate(g.degree(y)?, t, y);
                let exact = ev.current().get_f64(y);
                let z = if se > 0.0 { (e - exact) / se } else if (e - exact).abs() < 1e-12 { 0.0 } else { f64::INFINITY };
                worst_z = worst_z.max(z.abs());
                identity.push(vec![t.to_string(), y.to_string(), cell(e), cell(se), cell(exact), cell(z)]);
            }
        }
        let mut martingale = Table::new("martingale", &["t", "mean_weight", "se", "start_weight", "extinct"]);
        for t in 0..=horizon {
            let m = &est.weights[t];
            martingale.push(vec![
                t.to_string(),
                cell(m.mean()),
                cell(m.std_err()),
                est.start_weight.to_string(),
                est.extinct[t].to_string(),
            ]);
        }
        let mut out = Outcome::default().with_table(identity).with_table(martingale);
        out.set("replicates", p.replicates);
        out.set("max_abs_z", worst_z);
        if let Some(sb) = &p.size_biased {
            let profiles = sequence_profiles(seq.as_ref(), horizon, p.cap)?;
            let mut gamma = 0.5f64;
            for t in 0..=horizon {
                gamma = gamma.min(seq.snapshot_at(t)?.laziness_floor());
            }
            let params = SizeBiasedParams {
                alpha: sb.alpha,
                s: sb.s,
                gamma,
                profiles: profiles[sb.s.min(profiles.len())..].iter().cloned().map(Some).collect(),
            };
            // an independent stream family for the tilted process
            let sbe = run_size_biased(seq.as_ref(), x0, horizon, p.replicates, ctx.seed ^ 0x5B1A_5ED0, &params, ctx.budgets)?;
            let mut lt = Table::new("size_biased_l", &["u", "L", "se"]);
            for (u, l, se) in sbe.l_rows() {
                lt.push(vec![u.to_string(), cell(l), cell(se)]);
            }
            let mut ct = Table::new("contraction", &["u", "lhs", "lhs_se", "rhs", "rhs_se", "holds"]);
            for r in &sbe.contraction {
                ct.push(vec![r.u.to_string(), cell(r.lhs), cell(r.lhs_se), cell(r.rhs), cell(r.rhs_se), r.holds.to_string()]);
            }
            out.set("contraction_holds", sbe.contraction.iter().all(|r| r.holds));
            out = out.with_table(lt).with_table(ct);
        }
        Ok(out)
    }
}

pub struct Isoperimetry;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsoperimetryParams {
    #[serde(default = "path_block")]
    pub family: Value,
    #[serde(default)]
    pub times: Vec<usize>,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

impl TypedExperiment for Isoperimetry {
    type Params = IsoperimetryParams;
    const NAME: &'static str = "isoperimetry";
    const ABOUT: &'static str = "exact or analytic isoperimetric profiles of snapshots";

    fn run_typed(&self, p: &IsoperimetryParams, ctx: &RunContext) -> Result<Outcome, CliError> {
        let seq = ctx.family(&p.family)?;
        let times = if p.times.is_empty() { vec![0] } else { p.times.clone() };
        let mut table = Table::new("profile", &["t", "r", "phi", "source"]);
        let mut per_time = Vec::new();
        for &t in &times {
            let g = seq.snapshot_at(t)?;
            let profile = if g.len() <= p.cap {
                exact_profile(&g, p.cap)?
            } else {
                seq.analytic_profile(t).ok_or(Error::MissingProfile(t))?
            };
            for (r, phi) in profile.table() {
                table.push(vec![t.to_string(), cell(r), opt_cell(phi), profile.source().as_str().to_string()]);
            }
            per_time.push(json!({
                "t": t,
                "volume": profile.volume(),
                "source": profile.source().as_str(),
                "cheeger": profile.cheeger(),
                "witness": profile.witness().map(|w| w.iter().map(|v| v.0).collect::<Vec<_>>()),
            }));
        }
        let mut out = Outcome::default().with_table(table);
        out.set("profiles", per_time);
        Ok(out)
    }
}

pub struct Bounds;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsParams {
    #[serde(default = "two_vertex_block")]
    pub family: Value,
    #[serde(default)]
    pub x0: Option<u64>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
    /// Horizon of the transience series; 0 skips them.
    #[serde(default)]
    pub transience_horizon: usize,
}

fn default_alpha() -> f64 {
    0.5
}

impl TypedExperiment for Bounds {
    type Params = BoundsParams;
    const NAME: &'static str = "bounds";
    const ABOUT: &'static str = "heat-kernel upper bounds against exact evolution, transience series";

    fn run_typed(&self, p: &BoundsParams, ctx: &RunContext) -> Result<Outcome, CliError> {
        let seq = ctx.family(&p.family)?;
        let x0 = start(seq.as_ref(), p.x0);
        let horizon = horizon_of(seq.as_ref(), p.horizon);
        let bctx = BoundContext::for_sequence(seq.as_ref(), x0, horizon, p.alpha, p.cap)?;
        let report = soundness_scan(&bctx, seq.as_ref(), x0, horizon, ctx.budgets)?;
        let mut table = Table::new(
            "bounds",
            &["t", "y", "exact", "first_bound", "argmin_s", "second_bound", "margin"],
        );
        for r in &report.rows {
            table.push(vec![
                r.t.to_string(),
                r.y.to_string(),
                cell(r.exact_prob),
                cell(r.first_bound),
                r.argmin_s.to_string(),
                cell(r.second_bound),
                cell(r.margin),
            ]);
        }
        let mut out = Outcome::default().with_table(table);
        out.set("sound", report.sound());
        out.set("soundness", &report);
        if p.transience_horizon > 0 {
            let tr = transience_report(seq.as_ref(), p.transience_horizon, p.cap)?;
            let mut tt = Table::new("transience", &["t", "sum_inv_vol", "sum_mixing_term"]);
            for r in &tr.rows {
                tt.push(vec![r.t.to_string(), cell(r.sum_inv_vol), cell(r.sum_mixing_term)]);
            }
            out.set("transience", &tr);
            out = out.with_table(tt);
        }
        if p.family.get("family").and_then(Value::as_str) == Some("lattice_ball") {
            let d = p.family.get("d").and_then(Value::as_u64);
            let beta = p.family.get("beta").and_then(Value::as_f64);
            if let (Some(d @ 3..), Some(beta)) = (d, beta) {
                out.set("zd_phase", zd_phase(d as usize, beta)?);
            }
        }
        Ok(out)
    }
}

pub struct Merging;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergingParams {
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_theta")]
    pub eta: f64,
    /// Defaults to `100 N^2`.
    #[serde(default)]
    pub t_max: Option<usize>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Keep every `every`-th row of the distance table.
    #[serde(default = "default_every")]
    pub every: usize,
    #[serde(default)]
    pub stop_when_merged: bool,
    /// `N` grid of the excursion-tail scan; empty skips it.
    #[serde(default)]
    pub excursion_ns: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub excursion_replicates: u64,
}

fn default_n() -> usize {
    8
}

fn default_theta() -> f64 {
    0.05
}

fn default_delta() -> f64 {
    0.5
}

fn default_every() -> usize {
    1
}

impl TypedExperiment for Merging {
    type Params = MergingParams;
    const NAME: &'static str = "merging";
    const ABOUT: &'static str = "two-start merging distances of the drifting two-periodic chain";

    fn check(&self, p: &MergingParams) -> Result<(), CliError> {
        if p.n < 2 || p.n % 2 != 0 {
            return Err(CliError::Validation("merging: `N` must be even and at least 2".into()));
        }
        Ok(())
    }

    fn run_typed(&self, p: &MergingParams, ctx: &RunContext) -> Result<Outcome, CliError> {
        let theta = decimal_ratio("theta", p.theta)?;
        let eta = decimal_ratio("eta", p.eta)?;
        let t_max = p.t_max.unwrap_or(100 * p.n * p.n);
        let schedule = MergingChainSchedule::new(p.n, theta.clone(), eta.clone(), t_max)?;
        let options = MergingOptions { t_max, delta: p.delta, every: p.every, stop_when_merged: p.stop_when_merged };
        let report = if ctx.exact {
            merging_distances::<BigRational>(&schedule, &options, ctx.budgets)?
        } else {
            merging_distances::<f64>(&schedule, &options, ctx.budgets)?
        };
        let mut table = Table::new("merging", &["t", "tv", "relsup"]);
        for r in &report.rows {
            table.push(vec![r.t.to_string(), cell(r.tv), cell(r.relsup)]);
        }
        let mut out = Outcome { budget_exhausted: report.budget_exhausted, ..Outcome::default() }.with_table(table);
        out.set("N", report.n);
        out.set("theta", report.theta);
        out.set("eta", report.eta);
        out.set("eps", report.eps);
        out.set("T_tv", report.t_tv);
        out.set("T_sup", report.t_sup);
        out.set("budget_exhausted", report.budget_exhausted);
        out.set("report", &report);
        out.set("certificate", certify_constraints(&schedule));
        if theta > BigRational::from_integer(0.into()) {
            out.set("two_state", TwoStateSummary::from(&two_state_analysis(&theta, &eta)?));
        }
        if !p.excursion_ns.is_empty() {
            let ex = excursion_scan(&p.excursion_ns, &theta, &eta, p.excursion_replicates, ctx.seed, ctx.budgets)?;
            let mut et = Table::new("excursion", &["N", "replicates", "hits", "p", "se"]);
            for pt in &ex.points {
                et.push(vec![pt.n.to_string(), pt.replicates.to_string(), pt.hits.to_string(), cell(pt.p), cell(pt.std_err)]);
            }
            out.set("excursion", &ex);
            out = out.with_table(et);
        }
        Ok(out)
    }
}

pub struct LowerBound;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundParams {
    #[serde(default = "slow_ball_block")]
    pub family: Value,
    #[serde(default)]
    pub x0: Option<u64>,
    #[serde(default = "default_psi")]
    pub psi_exponent: f64,
    #[serde(default = "default_delta")]
    pub delta0: f64,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<usize>,
    #[serde(default)]
    pub target_c: Option<f64>,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn slow_ball_block() -> Value {
    json!({"family": "lattice_ball", "d": 2, "beta": 2.0 / 3.0, "horizon": 2000})
}

fn default_psi() -> f64 {
    2.0
}

fn default_t_grid() -> Vec<usize> {
    (100..=2000).step_by(100).collect()
}

impl TypedExperiment for LowerBound {
    type Params = LowerBoundParams;
    const NAME: &'static str = "lower-bound";
    const ABOUT: &'static str = "fitted on-window constant c in P(0, x0; t, y) >= c / v(t)";

    fn run_typed(&self, p: &LowerBoundParams, ctx: &RunContext) -> Result<Outcome, CliError> {
        let seq = ctx.family(&p.family)?;
        let x0 = start(seq.as_ref(), p.x0);
        let config = LowerBoundConfig {
            psi_exponent: p.psi_exponent,
            delta0: p.delta0,
            t_grid: p.t_grid.clone(),
            target_c: p.target_c,
        };
        let report = lower_bound_check(seq.as_ref(), x0, &config, p.cap, ctx.budgets)?;
        let mut table = Table::new(
            "lower_bound",
            &["t", "m", "window", "admissible", "min_v_times_P", "c_hat", "ball_gap"],
        );
        for r in &report.rows {
            table.push(vec![
                r.t.to_string(),
                r.m.to_string(),
                cell(r.window),
                r.admissible.to_string(),
                opt_cell(r.min_v_times_p),
                opt_cell(r.c_hat),
                opt_cell(r.ball_gap),
            ]);
        }
        let mut out = Outcome::default().with_table(table);
        out.set("report", &report);
        Ok(out)
    }
}

pub struct FrozenRecurrence;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenRecurrenceParams {
    #[serde(default = "frozen_block")]
    pub family: Value,
    #[serde(default = "default_walkers")]
    pub walkers: u64,
    #[serde(default)]
    pub hitting_walkers: u64,
}

fn frozen_block() -> Value {
    json!({
        "family": "frozen_nested", "d": 3, "inner": [1.0, 2.0, 4.0, 8.0], "outer": [1.5, 3.0, 6.0, 12.0],
        "times": [0, 40, 60, 400, 900], "delta": 0.3333333333333333, "c_d": 0.3
    })
}

fn default_walkers() -> u64 {
    4000
}

impl TypedExperiment for FrozenRecurrence {
    type Params = FrozenRecurrenceParams;
    const NAME: &'static str = "frozen-recurrence";
    const ABOUT: &'static str = "stage-wise local times and hitting laws on a frozen nested family";

    fn run_typed(&self, p: &FrozenRecurrenceParams, ctx: &RunContext) -> Result<Outcome, CliError> {
        let mut block = p.family.as_object().cloned().unwrap_or_default();
        match block.remove("family") {
            Some(Value::String(s)) if s == "frozen_nested" => {}
            _ => return Err(CliError::Validation("frozen-recurrence: `family` must be a frozen_nested block".into())),
        }
        let params: FrozenNestedParams =
            serde_json::from_value(Value::Object(block)).map_err(|e| CliError::Validation(format!("family: {e}")))?;
        let family = Arc::new(FrozenNestedFamily::new(params)?);
        let config = FrozenRecurrenceConfig { walkers: p.walkers, hitting_walkers: p.hitting_walkers, seed: ctx.seed };
        let report = frozen_recurrence_experiment(&family, &config, ctx.budgets)?;
        let mut stages = Table::new(
            "stages",
            &["l", "start", "end", "volume", "shape", "local_time", "local_time_se", "partial_sum"],
        );
        for s in &report.stages {
            stages.push(vec![
                s.l.to_string(),
                s.start.to_string(),
                s.end.to_string(),
                s.volume.to_string(),
                cell(s.shape),
                cell(s.local_time),
                cell(s.local_time_se),
                cell(s.partial_sum),
            ]);
        }
        let mut hitting = Table::new("hitting", &["l", "inner_radius", "offset", "face_ratio"]);
        for h in &report.hitting {
            hitting.push(vec![h.l.to_string(), h.inner_radius.to_string(), h.offset.to_string(), cell(h.face_ratio)]);
        }
        let mut out = Outcome::default().with_table(stages).with_table(hitting);
        out.set("report", &report);
        Ok(out)
    }
}

pub struct Acceptance;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceParams {
    /// Criterion numbers to run; empty runs all.
    #[serde(default)]
    pub criteria: Vec<usize>,
}

impl TypedExperiment for Acceptance {
    type Params = AcceptanceParams;
    const NAME: &'static str = "acceptance";
    const ABOUT: &'static str = "the full acceptance suite with a pass/fail summary";

    fn check(&self, p: &AcceptanceParams) -> Result<(), CliError> {
        if let Some(bad) = p.criteria.iter().find(|&&c| !(1..=acceptance::COUNT).contains(&c)) {
            return Err(CliError::Validation(format!("acceptance: no criterion {bad}")));
        }
        Ok(())
    }

    fn run_typed(&self, p: &AcceptanceParams, ctx: &RunContext) -> Result<Outcome, CliError> {
        let ids: Vec<usize> = if p.criteria.is_empty() { (1..=acceptance::COUNT).collect() } else { p.criteria.clone() };
        let results: Vec<_> = ids.iter().map(|&id| acceptance::run_criterion(id, ctx.seed)).collect();
        let mut table = Table::new("acceptance", &["criterion", "name", "passed", "detail"]);
        for r in &results {
            table.push(vec![r.id.to_string(), r.name.to_string(), r.passed.to_string(), r.detail.clone()]);
        }
        let mut out = Outcome::default().with_table(table);
        out.set("passed", results.iter().filter(|r| r.passed).count());
        out.set("failed", results.iter().filter(|r| !r.passed).count());
        out.set("criteria", &results);
        Ok(out)
    }
}
