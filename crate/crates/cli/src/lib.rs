//! Orchestration behind the `martrep` binary: model loading, the analysis
//! pipeline, the simulation pipeline and report rendering.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use martrep_core::enlargement::{
    canonical_pstar, decoupling_exists, immersion_check, is_minimal_martingale_measure, ImmersionVerdict, JointModel,
    MmmVerdict, NonRectangular,
};
use martrep_core::martingale_calculus::{covariation, mutually_singular, sharp_bracket, BracketMeasure, SingularityVerdict};
use martrep_core::mixed::MixedModel;
use martrep_core::model_file::ModelFile;
use martrep_core::representation::{
    classify_multiplicity, hedge, kusuoka_triplet, uniqueness_check, NodeCertificate, PrpVerdict,
};
use martrep_core::{Error, Node, ProcessTable, Rational, Scalar};
use martrep_sim::grid::induced_grid_model;
use martrep_sim::{SimConfig, SimReport};
use serde::Serialize;

pub const SCHEMA: &str = "martrep-report/1";

/// Exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_REFUSED: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Maps an error chain onto the exit-code contract.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        let core = cause
            .downcast_ref::<Error>()
            .or_else(|| match cause.downcast_ref::<martrep_sim::SimError>() {
                Some(martrep_sim::SimError::Core(e)) => Some(e),
                _ => None,
            });
        if let Some(e) = core {
            return match e {
                Error::Assumption { .. } | Error::Unsupported(_) => EXIT_REFUSED,
                Error::InternalConsistency(_) => EXIT_INTERNAL,
                _ => EXIT_INVALID,
            };
        }
    }
    EXIT_INVALID
}

/// Either a finite model document or a mixed-model document.
pub enum Source {
    Finite(Box<ModelFile<Rational>>),
    Mixed(MixedModel),
}

pub fn load_model(path: &Path) -> Result<Source> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::at("$", format!("not JSON: {e}")))
        .with_context(|| format!("loading {}", path.display()))?;
    if value.get("horizon").is_some() {
        let model: MixedModel = serde_json::from_value(value)
            .map_err(|e| Error::at("$", e.to_string()))
            .with_context(|| format!("loading {}", path.display()))?;
        model.validate().with_context(|| format!("validating {}", path.display()))?;
        return Ok(Source::Mixed(model));
    }
    let file = ModelFile::from_value(&value).with_context(|| format!("validating {}", path.display()))?;
    Ok(Source::Finite(Box::new(file)))
}

/// One line per checked item.
pub fn validate(path: &Path) -> Result<String> {
    Ok(match load_model(path)? {
        Source::Finite(f) => format!(
            "valid finite model: {} atoms, {} grid times, measures [{}], filtrations [{}], random times [{}]{}",
            f.space.n_atoms(),
            f.space.n_times(),
            f.measures.keys().cloned().collect::<Vec<_>>().join(", "),
            f.space.filtration_labels().collect::<Vec<_>>().join(", "),
            f.random_times.keys().cloned().collect::<Vec<_>>().join(", "),
            if f.joint.is_some() { ", joint section ok" } else { "" }
        ),
        Source::Mixed(m) => format!(
            "valid mixed model: horizon {}, {} values of eta, decoupling {}",
            m.horizon,
            m.eta.len(),
            if m.decoupling_holds() { "holds" } else { "fails" }
        ),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelEcho {
    pub atoms: Vec<String>,
    pub grid: Vec<f64>,
    pub eta: Vec<Option<f64>>,
    pub tau: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Refusal {
    pub stage: String,
    /// `assumption` or `internal`.
    pub kind: String,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecouplingSection {
    pub exists: bool,
    pub certificate: Option<NonRectangular>,
    pub pstar: Option<Vec<String>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub holds: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct BracketRow {
    pub time: f64,
    pub atom: String,
    pub d_sharp_m: String,
    pub d_sharp_h: String,
    pub cov_mh: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct BracketSection {
    pub rows: Vec<BracketRow>,
    pub singularity: SingularityVerdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationSection {
    pub verdict: usize,
    pub clause: String,
    pub multiplicity: usize,
    pub extremal_node: Option<Node>,
    pub certificates: Vec<NodeCertificate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TripletSection {
    pub prp: PrpVerdict,
    pub m_h_prime_orthogonal: bool,
    pub mh_vanishes: bool,
    pub m_mh_orthogonal: bool,
    pub density_constant: bool,
    pub non_orthogonality_consistent: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct HedgeRow {
    pub payoff: String,
    pub measure: String,
    pub basis: String,
    pub initial_value: String,
    pub residual_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasureAnalysis {
    pub measure: String,
    pub weights: Vec<String>,
    pub decoupling: DecouplingSection,
    pub a1: Option<Verdict>,
    pub immersion: ImmersionVerdict,
    pub mmm: Option<MmmVerdict>,
    pub brackets: Option<BracketSection>,
    pub classification: Option<ClassificationSection>,
    pub triplet: Option<TripletSection>,
    pub hedging: Vec<HedgeRow>,
    pub refusals: Vec<Refusal>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub schema: &'static str,
    pub source: String,
    pub model: ModelEcho,
    pub analyses: Vec<MeasureAnalysis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

impl AnalysisReport {
    pub fn exit_code(&self) -> i32 {
        let all = || self.analyses.iter().flat_map(|a| &a.refusals);
        if all().any(|r| r.kind == "internal") {
            EXIT_INTERNAL
        } else if all().any(|r| r.kind == "assumption" && r.stage != "triplet") {
            EXIT_REFUSED
        } else {
            EXIT_OK
        }
    }
}

fn record<T>(res: martrep_core::Result<T>, stage: &str, refusals: &mut Vec<Refusal>) -> Option<T> {
    match res {
        Ok(v) => Some(v),
        Err(e) => {
            let kind = match e {
                Error::Assumption { .. } | Error::Unsupported(_) => "assumption",
                _ => "internal",
            };
            refusals.push(Refusal {
                stage: stage.to_string(),
                kind: kind.to_string(),
                detail: e.to_string(),
            });
            None
        }
    }
}

fn exact(x: &Rational) -> String {
    x.to_string()
}

fn bracket_section(model: &JointModel<Rational>, pstar: &martrep_core::MeasureVector<Rational>) -> martrep_core::Result<BracketSection> {
    let p = model.p();
    let m = model.m(p)?;
    let h = model.h_martingale(p)?;
    let bm = sharp_bracket(&m, &m, model.g(), pstar)?;
    let bh = sharp_bracket(&h, &h, model.g(), pstar)?;
    let cov = covariation(&m, &h)?;
    let mut rows = Vec::new();
    for k in 1..model.n_times() {
        for a in p.support() {
            let inc = |x: &ProcessTable<Rational>| exact(&(x.value(k, a) - x.value(k - 1, a)));
            rows.push(BracketRow {
                time: model.space().grid()[k],
                atom: model.space().atoms()[a].clone(),
                d_sharp_m: inc(&bm),
                d_sharp_h: inc(&bh),
                cov_mh: inc(&cov),
            });
        }
    }
    let singularity = mutually_singular(
        &BracketMeasure::from_process(&bm)?,
        &BracketMeasure::from_process(&bh)?,
        model.g(),
        pstar,
    )?;
    Ok(BracketSection { rows, singularity })
}

fn atom_hedges(
    model: &JointModel<Rational>,
    measure: &martrep_core::MeasureVector<Rational>,
    label: &str,
    basis_label: &str,
    basis: &[ProcessTable<Rational>],
) -> martrep_core::Result<Vec<HedgeRow>> {
    let n = model.n_atoms();
    measure
        .support()
        .into_iter()
        .map(|a| {
            let payoff: Vec<Rational> = (0..n)
                .map(|i| if i == a { Rational::from_count(1) } else { Rational::from_count(0) })
                .collect();
            let h = hedge(&payoff, basis, model.g(), measure)?;
            Ok(HedgeRow {
                payoff: format!("1{{{}}}", model.space().atoms()[a]),
                measure: label.to_string(),
                basis: basis_label.to_string(),
                initial_value: exact(&h.integrands.initial),
                residual_norm: h.residual_norm,
            })
        })
        .collect()
}

/// Decoupling, P*, brackets, classifier, multiplicity, then the triplet,
/// m.m.m. and immersion checks, for one reference measure.
pub fn analyze_model(model: &JointModel<Rational>, measure: &str) -> MeasureAnalysis {
    let mut refusals = Vec::new();
    let p = model.p();
    let dec = decoupling_exists(model);
    let pstar = record(canonical_pstar(model), "decoupling", &mut refusals);
    let decoupling = DecouplingSection {
        exists: dec.q.is_some(),
        certificate: dec.certificate.clone(),
        pstar: pstar.as_ref().map(|q| q.weights().iter().map(exact).collect()),
    };
    let a1 = model.m(p).and_then(|m| uniqueness_check(&[m], model.f(), p));
    let a1 = record(a1, "A1", &mut refusals).map(|u| Verdict {
        holds: u.unique,
        detail: if u.unique {
            "M represents every F-martingale".to_string()
        } else {
            format!("{} free direction(s) in the F-martingale measures", u.dimension)
        },
    });
    let immersion = immersion_check(model, p);
    let mut analysis = MeasureAnalysis {
        measure: measure.to_string(),
        weights: p.weights().iter().map(exact).collect(),
        decoupling,
        a1,
        immersion,
        mmm: None,
        brackets: None,
        classification: None,
        triplet: None,
        hedging: Vec::new(),
        refusals: Vec::new(),
    };
    if let Some(pstar) = &pstar {
        analysis.mmm = record(is_minimal_martingale_measure(model, p, pstar), "m.m.m.", &mut refusals);
        analysis.brackets = record(bracket_section(model, pstar), "brackets", &mut refusals);
        if analysis.a1.as_ref().is_some_and(|v| v.holds) {
            analysis.classification = record(classify_multiplicity(model), "classification", &mut refusals).map(|c| {
                ClassificationSection {
                    verdict: c.verdict,
                    clause: c.clause,
                    multiplicity: c.multiplicity.multiplicity,
                    extremal_node: c.multiplicity.extremal_node,
                    certificates: c.multiplicity.certificates,
                }
            });
        } else if analysis.a1.is_some() {
            refusals.push(Refusal {
                stage: "classification".into(),
                kind: "assumption".into(),
                detail: "assumption A1 fails: M does not represent F".into(),
            });
        }
        analysis.triplet = record(kusuoka_triplet(model), "triplet", &mut refusals).map(|t| TripletSection {
            non_orthogonality_consistent: t.remark_non_orthogonality_holds(),
            prp: t.prp,
            m_h_prime_orthogonal: t.m_h_prime_orthogonal,
            mh_vanishes: t.mh_vanishes,
            m_mh_orthogonal: t.m_mh_orthogonal,
            density_constant: t.density_constant,
        });
        let star_basis = model.m(pstar).and_then(|m| {
            let h = model.h_martingale(pstar)?;
            let mh = covariation(&m, &h)?;
            Ok(vec![m, h, mh])
        });
        if let Some(rows) = record(
            star_basis.and_then(|b| atom_hedges(model, pstar, "P*", "M, H, [M,H]", &b)),
            "hedging",
            &mut refusals,
        ) {
            analysis.hedging.extend(rows);
        }
        if analysis.triplet.is_some() {
            let p_basis = kusuoka_triplet(model).map(|t| t.basis().to_vec());
            if let Some(rows) = record(
                p_basis.and_then(|b| atom_hedges(model, p, "P", "M, H', [M,H]", &b)),
                "hedging",
                &mut refusals,
            ) {
                analysis.hedging.extend(rows);
            }
        }
    }
    analysis.refusals = refusals;
    analysis
}

fn echo(model: &JointModel<Rational>) -> ModelEcho {
    let grid = model.space().grid();
    let times = |t: &martrep_core::RandomTime| t.values().iter().map(|v| v.map(|k| grid[k])).collect();
    ModelEcho {
        atoms: model.space().atoms().to_vec(),
        grid: grid.to_vec(),
        eta: times(model.eta()),
        tau: times(model.tau()),
    }
}

/// Runs the analysis for each named measure of a finite model, or for the
/// induced grid model of an atomic mixed model.
pub fn analyze(source_label: &str, source: &Source, measures: &[String]) -> Result<AnalysisReport> {
    let models: Vec<(String, JointModel<Rational>)> = match source {
        Source::Finite(file) => {
            let names: Vec<String> = if measures.is_empty() {
                file.measures.keys().cloned().collect()
            } else {
                measures.to_vec()
            };
            names
                .into_iter()
                .map(|n| Ok((n.clone(), file.joint_model(&n)?)))
                .collect::<martrep_core::Result<_>>()?
        }
        Source::Mixed(m) => vec![("P".to_string(), induced_grid_model(m)?)],
    };
    let model = echo(&models[0].1);
    let analyses = models.iter().map(|(name, m)| analyze_model(m, name)).collect();
    Ok(AnalysisReport {
        schema: SCHEMA,
        source: source_label.to_string(),
        model,
        analyses,
        timing_ms: None,
    })
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

pub fn render_analysis_text(report: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "martrep analysis ({}) of {}", report.schema, report.source);
    let _ = writeln!(s, "atoms: {}", report.model.atoms.join(" "));
    let _ = writeln!(s, "grid:  {:?}", report.model.grid);
    for a in &report.analyses {
        let _ = writeln!(s, "\n== measure {} ==", a.measure);
        let _ = writeln!(s, "weights:             {}", a.weights.join(" "));
        let _ = writeln!(s, "decoupling (D):      {}", yes(a.decoupling.exists));
        if let Some(c) = &a.decoupling.certificate {
            let _ = writeln!(s, "  missing cross cell: F cell {:?} x H cell {:?}", c.f_cell_atoms, c.h_cell_atoms);
        }
        if let Some(p) = &a.decoupling.pstar {
            let _ = writeln!(s, "P*:                  {}", p.join(" "));
        }
        if let Some(v) = &a.a1 {
            let _ = writeln!(s, "A1:                  {} ({})", yes(v.holds), v.detail);
        }
        let _ = writeln!(s, "immersion under P:   {}", yes(a.immersion.holds));
        if let Some(m) = &a.mmm {
            let _ = writeln!(s, "P is m.m.m.:         {}", yes(m.is_mmm));
            for r in [&m.definition_route, &m.bracket_route] {
                if let Some(w) = &r.witness {
                    let _ = writeln!(s, "  witness: {w}");
                }
            }
        }
        if let Some(b) = &a.brackets {
            let _ = writeln!(s, "\n{:>6} {:>12} {:>12} {:>12} {:>12}", "time", "atom", "d<M>", "d<H>", "d[M,H]");
            for r in &b.rows {
                let _ = writeln!(s, "{:>6} {:>12} {:>12} {:>12} {:>12}", r.time, r.atom, r.d_sharp_m, r.d_sharp_h, r.cov_mh);
            }
            let _ = writeln!(s, "brackets singular:   {}", yes(b.singularity.singular));
        }
        if let Some(c) = &a.classification {
            let _ = writeln!(s, "classifier verdict:  {} ({})", c.verdict, c.clause);
            let _ = writeln!(s, "multiplicity:        {}", c.multiplicity);
        }
        if let Some(t) = &a.triplet {
            let _ = writeln!(s, "triplet p.r.p.:      {}", yes(t.prp.holds));
            let _ = writeln!(s, "M, H' orthogonal:    {}", yes(t.m_h_prime_orthogonal));
            let _ = writeln!(s, "<M,[M,H]> vanishes:  {}", yes(t.m_mh_orthogonal));
        }
        if !a.hedging.is_empty() {
            let _ = writeln!(s, "\n{:>16} {:>4} {:>14} {:>10} {:>10}", "payoff", "meas", "basis", "price", "residual");
            for h in &a.hedging {
                let _ = writeln!(
                    s,
                    "{:>16} {:>4} {:>14} {:>10} {:>10.3e}",
                    h.payoff, h.measure, h.basis, h.initial_value, h.residual_norm
                );
            }
        }
        for r in &a.refusals {
            let _ = writeln!(s, "refused at {} [{}]: {}", r.stage, r.kind, r.detail);
        }
    }
    if let Some(t) = report.timing_ms {
        let _ = writeln!(s, "\nelapsed: {t:.1} ms");
    }
    s
}

pub fn render_analysis_csv(report: &AnalysisReport) -> String {
    let mut s = String::from("measure,time,atom,d_sharp_m,d_sharp_h,cov_mh\n");
    for a in &report.analyses {
        for r in a.brackets.iter().flat_map(|b| &b.rows) {
            let _ = writeln!(s, "{},{},{},{},{},{}", a.measure, r.time, r.atom, r.d_sharp_m, r.d_sharp_h, r.cov_mh);
        }
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationReport {
    pub schema: &'static str,
    #[serde(flatten)]
    pub sim: SimReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

pub fn simulate(label: &str, model: &MixedModel, cfg: &SimConfig, payoff: Option<&str>) -> Result<(SimulationReport, martrep_sim::PathBatch)> {
    let (sim, batch) = martrep_sim::run(label, model, cfg, payoff)?;
    Ok((
        SimulationReport {
            schema: SCHEMA,
            sim,
            timing_ms: None,
        },
        batch,
    ))
}

pub fn render_simulation_text(report: &SimulationReport) -> String {
    let r = &report.sim;
    let mut s = String::new();
    let _ = writeln!(s, "martrep simulation ({}) of {}", report.schema, r.preset);
    let _ = writeln!(s, "paths {}  dt {}  seed {}", r.n, r.dt, r.seed);
    let _ = writeln!(s, "reading: {}", r.conditioning_reading);
    let _ = writeln!(s, "\nmartingale z-tests (threshold {}):", martrep_sim::ztest::Z_THRESHOLD);
    let _ = writeln!(s, "{:>8} {:>8} {:>8} {:>10} {:>8} {:>12} {:>12} {:>9}", "channel", "from", "to", "cell", "n", "mean", "se", "z");
    for z in &r.ztests {
        for c in &z.cells {
            let _ = writeln!(
                s,
                "{:>8} {:>8} {:>8} {:>10} {:>8} {:>12.4e} {:>12.4e} {:>9.2}{}",
                z.channel.name(),
                c.from,
                c.to,
                format!("{:?}", c.cell),
                c.n,
                c.mean,
                c.std_error,
                c.z,
                if c.violation { " !" } else { "" }
            );
        }
        let _ = writeln!(
            s,
            "{:>8} {} (max |z| {:.2}, {} cell(s) skipped)",
            z.channel.name(),
            if z.passes { "passes" } else { "FAILS" },
            z.max_abs_z,
            z.skipped.len()
        );
    }
    let _ = writeln!(s, "\nhedging:");
    let _ = writeln!(s, "{:>24} {:>20} {:>10} {:>10} {:>6}", "payoff", "basis", "R2", "RMSE", "ridge");
    for h in &r.hedges {
        let basis: Vec<&str> = h.basis.iter().map(|c| c.name()).collect();
        let _ = writeln!(
            s,
            "{:>24} {:>20} {:>10.5} {:>10.3e} {:>6}",
            h.payoff,
            basis.join(","),
            h.r_squared,
            h.rmse,
            h.ridge_cells
        );
    }
    if let Some(t) = report.timing_ms {
        let _ = writeln!(s, "\nelapsed: {t:.1} ms");
    }
    s
}

pub fn render_simulation_csv(report: &SimulationReport) -> String {
    let mut s = String::from("channel,from,to,cell_eta,cell_tau,n,mean,std_error,z,violation\n");
    for z in &report.sim.ztests {
        for c in &z.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                z.channel.name(),
                c.from,
                c.to,
                c.cell.0,
                c.cell.1,
                c.n,
                c.mean,
                c.std_error,
                c.z,
                c.violation
            );
        }
    }
    s
}

/// Tables followed by the JSON form of the same report.
pub fn with_json<T: Serialize>(text: String, report: &T) -> Result<String> {
    Ok(format!("{text}\n--- json ---\n{}\n", serde_json::to_string_pretty(report)?))
}
