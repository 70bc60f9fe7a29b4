//! One compute function per subcommand plus its rendering into files.

use ftem_core::aphid::{self, AphidEvent, AphidModel, AphidState, AphidTrajectory, PeakMetrics};
use ftem_core::bifurcation::{self, PitchforkResult, SaddleNodeResult};
use ftem_core::equilibria::{self, EquilibriumKind, EquilibriumPoint, EquilibriumReport, Stability};
use ftem_core::ode::{self, GridSpec, PhasePortrait, Trajectory};
use ftem_core::pde::{self, Field, FteDiagnostic, NormRow, Outcome, PdeState};
use ftem_core::{fmt_f64, CompetitionParams, FtemError, State2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::*;
use crate::output::{Artifacts, Cell, Csv};
use crate::{verify, CliError};

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

/// Run the configured command and collect its output files.
pub fn execute(cfg: &Resolved, jobs: usize) -> Result<Artifacts, CliError> {
    let mut out = Artifacts::default();
    match &cfg.params {
        Params::Equilibria(p) => render_equilibria(&equilibria(p)?, &mut out),
        Params::Classify(p) => render_classify(&classify(p)?, &mut out),
        Params::SweepQ(p) => {
            let rows = sweep_q(p, jobs)?;
            out.text("sweep_q.csv", bifurcation::sweep_csv(&rows));
        }
        Params::SaddleNode(p) => out.json("saddle_node.json", &saddle_node(p)?),
        Params::Pitchfork(p) => out.json("pitchfork.json", &pitchfork(p)?),
        Params::Simulate(p) => render_simulate(&simulate(p, cfg.seed, jobs)?, &mut out),
        Params::PhasePortrait(p) => render_phase_portrait(&phase_portrait(p)?, &mut out),
        Params::Separatrix(p) => {
            let line = separatrix(p)?;
            out.text("separatrix.csv", states_csv(&line));
        }
        Params::PdeRun(p) => render_pde(&pde_run(p, jobs)?, &mut out),
        Params::Aphid(p) => render_aphid(&aphid_runs(p, jobs)?, &mut out),
        Params::Verify(p) => {
            let report = verify::run(p, cfg.seed);
            out.json("verify.json", &report);
        }
    }
    Ok(out)
}

fn states_csv(states: &[State2]) -> String {
    let mut c = Csv::new(&["u", "v"]);
    for s in states {
        c.nums(&[s.u, s.v]);
    }
    c.finish()
}

// ---------------------------------------------------------------- equilibria

#[derive(Debug, Clone, Serialize)]
pub struct LabeledReport {
    pub label: String,
    pub report: EquilibriumReport,
}

pub fn equilibria(p: &EquilibriaParams) -> Result<Vec<LabeledReport>, CliError> {
    p.cases
        .iter()
        .map(|c| Ok(LabeledReport { label: c.label.clone(), report: equilibria::full_report(&c.params)? }))
        .collect()
}

const POINT_HEADER: [&str; 9] = ["label", "kind", "u", "v", "stability", "re1", "im1", "re2", "im2"];

fn point_row(c: &mut Csv, label: &str, pt: &EquilibriumPoint) {
    let ev = |i: usize, im: bool| pt.eigenvalues.map(|e| if im { e[i].im } else { e[i].re });
    let kind = serde_json::to_value(pt.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
    c.row(&[
        Cell::Text(label.to_string()),
        Cell::Text(kind),
        Cell::Num(pt.location.u),
        Cell::Num(pt.location.v),
        Cell::Text(pt.stability.as_str().to_string()),
        Cell::OptNum(ev(0, false)),
        Cell::OptNum(ev(0, true)),
        Cell::OptNum(ev(1, false)),
        Cell::OptNum(ev(1, true)),
    ]);
}

fn render_equilibria(reports: &[LabeledReport], out: &mut Artifacts) {
    let mut c = Csv::new(&POINT_HEADER);
    for r in reports {
        for pt in &r.report.points {
            point_row(&mut c, &r.label, pt);
        }
    }
    out.text("equilibria.csv", c.finish());
    out.json("equilibria.json", &reports);
}

// ------------------------------------------------------------------ classify

pub fn classify(p: &ClassifyParams) -> Result<Vec<EquilibriumPoint>, CliError> {
    p.points.iter().map(|s| Ok(equilibria::classify(*s, &p.params)?)).collect()
}

fn render_classify(points: &[EquilibriumPoint], out: &mut Artifacts) {
    let mut c = Csv::new(&POINT_HEADER);
    for (i, pt) in points.iter().enumerate() {
        point_row(&mut c, &format!("point{i}"), pt);
    }
    out.text("classify.csv", c.finish());
    out.json("classify.json", &points);
}

// ------------------------------------------------------------------- sweep-q

pub fn sweep_q(p: &SweepQParams, jobs: usize) -> Result<Vec<bifurcation::SweepRow>, CliError> {
    let grid = bifurcation::linspace(p.q_lo, p.q_hi, p.n);
    Ok(bifurcation::sweep_q(&p.params, &grid, jobs)?)
}

// --------------------------------------------------------------- saddle-node

#[derive(Debug, Clone, Serialize)]
pub struct CountAt {
    pub q: f64,
    pub interior_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SaddleNodeOutput {
    pub coupling: bifurcation::ExponentCoupling,
    pub result: SaddleNodeResult,
    pub counts: Vec<CountAt>,
}

pub fn saddle_node(p: &SaddleNodeParams) -> Result<SaddleNodeOutput, CliError> {
    let result = bifurcation::saddle_node_q(&p.params, (p.bracket[0], p.bracket[1]), p.coupling)?;
    let counts = p
        .check_q
        .iter()
        .map(|&q| {
            let r = equilibria::full_report(&p.coupling.apply(&p.params, q))?;
            Ok(CountAt { q, interior_count: r.interior_count })
        })
        .collect::<Result<_, FtemError>>()?;
    Ok(SaddleNodeOutput { coupling: p.coupling, result, counts })
}

// ----------------------------------------------------------------- pitchfork

pub fn pitchfork(p: &PitchforkParams) -> Result<PitchforkResult, CliError> {
    Ok(bifurcation::pitchfork_q(&p.params)?)
}

// ------------------------------------------------------------------ simulate

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Given,
    Random,
    Straddle,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimRun {
    pub index: usize,
    pub origin: Origin,
    /// Pair index for straddling starts.
    pub pair: Option<usize>,
    pub start: State2,
    pub end: State2,
    pub t_end: f64,
    pub extinction_u: Option<f64>,
    pub extinction_v: Option<f64>,
    /// Name of the equilibrium within `attractor_tol` of the end state.
    pub attractor: Option<String>,
    /// Side of the separatrix the start lies on (`+1`/`-1`).
    pub side: Option<i8>,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimCaseResult {
    pub label: String,
    pub report: EquilibriumReport,
    pub separatrix: Option<Vec<State2>>,
    pub runs: Vec<SimRun>,
}

/// Short name of an equilibrium: `E0`, `Eu`, `Ev<i>`, `interior<i>`.
pub fn point_name(report: &EquilibriumReport, idx: usize) -> String {
    let pt = &report.points[idx];
    let rank = report.points[..idx].iter().filter(|q| q.kind == pt.kind).count();
    match pt.kind {
        EquilibriumKind::TrivialE0 => "E0".into(),
        EquilibriumKind::BoundaryEu => "Eu".into(),
        EquilibriumKind::BoundaryEv => format!("Ev{rank}"),
        EquilibriumKind::Interior => format!("interior{rank}"),
    }
}

fn default_arc(p: &CompetitionParams) -> f64 {
    let (gu, gv) = p.gamma();
    4.0 * (gu + gv)
}

fn interior_saddle(report: &EquilibriumReport) -> Option<State2> {
    report.interior().find(|e| e.stability == Stability::Saddle).map(|e| e.location)
}

/// Points at distance `offset` on both sides of the polyline, at `pairs`
/// stations evenly spaced in arc length.
pub fn straddle_points(line: &[State2], pairs: usize, offset: f64) -> Vec<(State2, State2)> {
    let mut cum = vec![0.0];
    for w in line.windows(2) {
        cum.push(cum.last().unwrap() + w[0].dist(&w[1]));
    }
    let total = *cum.last().unwrap_or(&0.0);
    let mut out = Vec::with_capacity(pairs);
    for k in 0..pairs {
        let target = total * (k as f64 + 0.5) / pairs as f64;
        let i = cum.partition_point(|&c| c < target).clamp(1, line.len() - 1);
        let (a, b) = (line[i - 1], line[i]);
        let seg = a.dist(&b);
        if seg == 0.0 {
            continue;
        }
        let s = ((target - cum[i - 1]) / seg).clamp(0.0, 1.0);
        let at = State2::new(a.u + s * (b.u - a.u), a.v + s * (b.v - a.v));
        let n = State2::new(-(b.v - a.v) / seg, (b.u - a.u) / seg);
        out.push((
            State2::new(at.u + offset * n.u, at.v + offset * n.v),
            State2::new(at.u - offset * n.u, at.v - offset * n.v),
        ));
    }
    out
}

fn attractor_of(report: &EquilibriumReport, end: State2, tol: f64) -> Option<String> {
    report
        .points
        .iter()
        .enumerate()
        .filter(|(_, pt)| !pt.stability.is_unstable())
        .map(|(i, pt)| (i, pt.location.dist(&end)))
        .filter(|(_, d)| *d < tol)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| point_name(report, i))
}

pub fn simulate(p: &SimulateParams, seed: u64, jobs: usize) -> Result<Vec<SimCaseResult>, CliError> {
    let pool = pool(jobs)?;
    let mut results = Vec::with_capacity(p.cases.len());
    for (ci, case) in p.cases.iter().enumerate() {
        let report = equilibria::full_report(&case.params)?;
        let sep = match interior_saddle(&report) {
            Some(s) => Some(ode::separatrix(&case.params, s, default_arc(&case.params))?),
            None => None,
        };
        let mut starts: Vec<(Origin, Option<usize>, State2)> =
            case.initial.iter().map(|s| (Origin::Given, None, *s)).collect();
        let (gu, gv) = case.params.gamma();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(ci as u64));
        for _ in 0..case.random_starts {
            let u = gu * rng.gen_range(f64::EPSILON..1.0);
            let v = gv * rng.gen_range(f64::EPSILON..1.0);
            starts.push((Origin::Random, None, State2::new(u, v)));
        }
        if let Some(st) = &case.straddle {
            let line = sep.as_ref().ok_or_else(|| {
                CliError::Config(format!("case `{}` asks for straddling starts but has no interior saddle", case.label))
            })?;
            let inside = |s: &State2| s.u > 0.0 && s.v > 0.0 && s.u < gu && s.v < gv;
            let m = 2.0 * st.offset;
            let trimmed: Vec<State2> =
                line.iter().copied().filter(|s| s.u > m && s.v > m && s.u < gu - m && s.v < gv - m).collect();
            if trimmed.len() < 2 {
                return Err(CliError::Config(format!("separatrix of case `{}` is too short to straddle", case.label)));
            }
            let mut k = 0;
            for (a, b) in straddle_points(&trimmed, st.pairs, st.offset) {
                if inside(&a) && inside(&b) {
                    starts.push((Origin::Straddle, Some(k), a));
                    starts.push((Origin::Straddle, Some(k), b));
                    k += 1;
                }
            }
        }
        let opts = p.options;
        let params = case.params;
        let trajs: Vec<Result<Trajectory, FtemError>> =
            pool.install(|| starts.par_iter().map(|(_, _, s)| ode::integrate(&params, *s, &opts)).collect());
        let mut runs = Vec::with_capacity(starts.len());
        for (index, ((origin, pair, start), traj)) in starts.into_iter().zip(trajs).enumerate() {
            let trajectory = traj?;
            let end = trajectory.last().unwrap_or(start);
            let side = sep.as_ref().map(|l| if ode::side_of_polyline(l, start).0 >= 0.0 { 1 } else { -1 });
            runs.push(SimRun {
                index,
                origin,
                pair,
                start,
                end,
                t_end: *trajectory.times.last().unwrap_or(&0.0),
                extinction_u: trajectory.extinction_time(ode::Species::U),
                extinction_v: trajectory.extinction_time(ode::Species::V),
                attractor: attractor_of(&report, end, p.attractor_tol),
                side,
                trajectory,
            });
        }
        results.push(SimCaseResult { label: case.label.clone(), report, separatrix: sep, runs });
    }
    Ok(results)
}

/// `t,u,v` per accepted step, extinction events as trailing comments.
pub fn trajectory_csv(t: &Trajectory) -> String {
    let mut c = Csv::new(&["t", "u", "v"]);
    for (time, s) in t.times.iter().zip(&t.states) {
        c.nums(&[*time, s.u, s.v]);
    }
    for e in &t.events {
        c.comment(&format!("event,{},{},extinction", fmt_f64(e.t), e.species.as_str()));
    }
    c.finish()
}

fn render_simulate(cases: &[SimCaseResult], out: &mut Artifacts) {
    let mut c = Csv::new(&[
        "label", "index", "origin", "pair", "u0", "v0", "t_end", "u_end", "v_end", "t_ext_u", "t_ext_v", "attractor",
        "side",
    ]);
    for case in cases {
        for r in &case.runs {
            let origin = match r.origin {
                Origin::Given => "given",
                Origin::Random => "random",
                Origin::Straddle => "straddle",
            };
            c.row(&[
                Cell::Text(case.label.clone()),
                Cell::Int(r.index as i64),
                Cell::Text(origin.into()),
                Cell::Text(r.pair.map(|k| k.to_string()).unwrap_or_default()),
                Cell::Num(r.start.u),
                Cell::Num(r.start.v),
                Cell::Num(r.t_end),
                Cell::Num(r.end.u),
                Cell::Num(r.end.v),
                Cell::OptNum(r.extinction_u),
                Cell::OptNum(r.extinction_v),
                Cell::Text(r.attractor.clone().unwrap_or_default()),
                Cell::Text(r.side.map(|s| s.to_string()).unwrap_or_default()),
            ]);
            out.text(format!("trajectories/{}_{:03}.csv", case.label, r.index), trajectory_csv(&r.trajectory));
        }
        if let Some(line) = &case.separatrix {
            out.text(format!("separatrix_{}.csv", case.label), states_csv(line));
        }
        out.json(format!("equilibria_{}.json", case.label), &case.report);
    }
    out.text("summary.csv", c.finish());
}

// ------------------------------------------------------------ phase portrait

pub fn phase_portrait(p: &PhasePortraitParams) -> Result<PhasePortrait, CliError> {
    let grid = p.grid.unwrap_or_else(|| GridSpec::full(&p.params, p.samples));
    Ok(ode::phase_portrait(&p.params, &grid, &p.options)?)
}

fn render_phase_portrait(pp: &PhasePortrait, out: &mut Artifacts) {
    out.text("u_nullcline.csv", states_csv(&pp.u_nullcline));
    out.text("v_nullcline.csv", states_csv(&pp.v_nullcline));
    out.json("equilibria.json", &pp.equilibria);
    if let Some(line) = &pp.separatrix {
        out.text("separatrix.csv", states_csv(line));
    }
    for (i, t) in pp.trajectories.iter().enumerate() {
        out.text(format!("trajectory_{i}.csv"), trajectory_csv(t));
    }
}

// ---------------------------------------------------------------- separatrix

pub fn separatrix(p: &SeparatrixParams) -> Result<Vec<State2>, CliError> {
    let saddle = match p.saddle {
        Some(s) => s,
        None => {
            let report = equilibria::full_report(&p.params)?;
            interior_saddle(&report).ok_or_else(|| CliError::Config("no interior saddle for these parameters".into()))?
        }
    };
    Ok(ode::separatrix(&p.params, saddle, p.arc_len.unwrap_or_else(|| default_arc(&p.params)))?)
}

// ------------------------------------------------------------------- pde-run

#[derive(Debug, Clone, Serialize)]
pub struct PdeSummary {
    pub p: f64,
    pub outcome: Outcome,
    pub extinct_field: Option<Field>,
    pub extinction_time: Option<f64>,
    pub l2_crossing_u: Option<f64>,
    pub l2_crossing_v: Option<f64>,
    pub final_norms: Option<NormRow>,
    pub steps: usize,
    pub clipped_mass: f64,
    pub fte: Option<FteDiagnostic>,
}

#[derive(Debug, Clone)]
pub struct PdeResult {
    pub summary: PdeSummary,
    pub run: pde::PdeRun,
    /// Cell centers.
    pub x: Vec<f64>,
}

pub fn pde_run(p: &PdeRunParams, jobs: usize) -> Result<Vec<PdeResult>, CliError> {
    let ps = if p.p_values.is_empty() { vec![p.config.p] } else { p.p_values.clone() };
    let pool = pool(jobs)?;
    let runs: Vec<Result<PdeResult, FtemError>> = pool.install(|| {
        ps.par_iter()
            .map(|&exp| {
                let mut cfg = p.config.clone();
                cfg.p = exp;
                let run = pde::run(&cfg, &p.u0, &p.v0)?;
                let summary = PdeSummary {
                    p: exp,
                    outcome: pde::outcome(&run, p.outcome_tol),
                    extinct_field: run.extinction.map(|e| e.0),
                    extinction_time: run.extinction.map(|e| e.1),
                    l2_crossing_u: run.l2_crossing_u,
                    l2_crossing_v: run.l2_crossing_v,
                    final_norms: run.norms.last().copied(),
                    steps: run.steps,
                    clipped_mass: run.clipped_mass,
                    fte: run.fte,
                };
                Ok(PdeResult { summary, run, x: cfg.centers() })
            })
            .collect()
    });
    Ok(runs.into_iter().collect::<Result<_, _>>()?)
}

fn snapshots_csv(snaps: &[PdeState], x: &[f64]) -> String {
    let mut c = Csv::new(&["t", "x", "u", "v"]);
    for s in snaps {
        for (i, xi) in x.iter().enumerate() {
            c.nums(&[s.t, *xi, s.u[i], s.v[i]]);
        }
    }
    c.finish()
}

fn norms_csv(rows: &[NormRow]) -> String {
    let mut c = Csv::new(&["t", "l2_u", "l2_v", "sup_u", "sup_v"]);
    for r in rows {
        c.nums(&[r.t, r.l2_u, r.l2_v, r.sup_u, r.sup_v]);
    }
    c.finish()
}

fn render_pde(results: &[PdeResult], out: &mut Artifacts) {
    for r in results {
        let tag = format!("p{}", r.summary.p);
        out.text(format!("snapshots_{tag}.csv"), snapshots_csv(&r.run.snapshots, &r.x));
        out.text(format!("norms_{tag}.csv"), norms_csv(&r.run.norms));
    }
    let summaries: Vec<&PdeSummary> = results.iter().map(|r| &r.summary).collect();
    out.json("pde_summary.json", &summaries);
}

// --------------------------------------------------------------------- aphid

#[derive(Debug, Clone, Serialize)]
pub struct AphidSummary {
    pub name: String,
    pub model: AphidModel,
    pub extinction_time: Option<f64>,
    pub final_state: Option<AphidState>,
    pub peaks: Option<PeakMetrics>,
    pub switches: usize,
}

#[derive(Debug, Clone)]
pub struct AphidResult {
    pub summary: AphidSummary,
    pub trajectory: AphidTrajectory,
}

pub fn aphid_runs(p: &AphidRunParams, jobs: usize) -> Result<Vec<AphidResult>, CliError> {
    let jobs_list: Vec<(&NamedState, AphidModel)> =
        p.initial_states.iter().flat_map(|s| p.models.iter().map(move |m| (s, *m))).collect();
    let pool = pool(jobs)?;
    let runs: Vec<Result<AphidResult, FtemError>> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|(s, model)| {
                let trajectory = aphid::simulate(&p.params, s.state, p.t_end, *model, &p.options)?;
                let summary = AphidSummary {
                    name: s.name.clone(),
                    model: *model,
                    extinction_time: trajectory.extinction_time(),
                    final_state: trajectory.states.last().copied(),
                    peaks: aphid::peak_metrics(&trajectory).ok(),
                    switches: trajectory.events.iter().filter(|e| matches!(e, AphidEvent::Switch { .. })).count(),
                };
                Ok(AphidResult { summary, trajectory })
            })
            .collect()
    });
    Ok(runs.into_iter().collect::<Result<_, _>>()?)
}

fn aphid_csv(t: &AphidTrajectory) -> String {
    let mut c = Csv::new(&["t", "h", "xA", "xV", "A"]);
    for (time, s) in t.times.iter().zip(&t.states) {
        c.nums(&[*time, s.h, s.x_a, s.x_v, s.big_a]);
    }
    for e in &t.events {
        match e {
            AphidEvent::Extinction { t, .. } => c.comment(&format!("event,{},xA,extinction", fmt_f64(*t))),
            AphidEvent::Switch { t, x_a, above } => {
                c.comment(&format!("event,{},xA,switch,{},{}", fmt_f64(*t), fmt_f64(*x_a), above))
            }
        }
    }
    c.finish()
}

fn render_aphid(results: &[AphidResult], out: &mut Artifacts) {
    for r in results {
        let model = match r.summary.model {
            AphidModel::Classic => "classic",
            AphidModel::Harvested => "harvested",
        };
        out.text(format!("aphid_{}_{model}.csv", r.summary.name), aphid_csv(&r.trajectory));
    }
    let summaries: Vec<&AphidSummary> = results.iter().map(|r| &r.summary).collect();
    out.json("aphid_summary.json", &summaries);
}
