//! The computations behind each subcommand and scenario pipeline.

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use framecover_core::approx::{constants_of, ApproximatingSequence, Side};
use framecover_core::bip::{bip_feasible, bip_three_point, BipInstance, BipOptions, BipOutcome};
use framecover_core::covering::{
    generate_bcp_points, sample_unit_operators, verify_cover, BallCover, CoverParams, Coverer, OperatorSpace, Verdict,
    VerifyOptions,
};
use framecover_core::dilation::{dilation_report, DilationOptions};
use framecover_core::frames::{block_unconditional_bound, dilate_to_frame, frame_bound, SchauderFrame};
use framecover_core::opnorm::{alpha_norm, op_norm, quotient_seminorm, NormMode, OpNormOptions, Operator, TailModel};
use framecover_core::rng;
use framecover_core::signs::SignMode;
use framecover_core::spaces::{unit_net, SpaceSpec};

use crate::input::{space, Ctx, Rows};
use crate::report::{to_value, Table};

/// What a pipeline produced. Nonempty `findings` means an assertion failed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub result: Value,
    pub findings: Vec<String>,
    pub tables: Vec<Table>,
}

fn core<T>(r: framecover_core::Result<T>) -> Result<T> {
    r.map_err(|e| anyhow!("{e}"))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn opts(seed: u64, restarts: Option<usize>) -> OpNormOptions {
    let d = OpNormOptions::default();
    OpNormOptions { seed, restarts: restarts.unwrap_or(d.restarts), ..d }
}

fn sequence(ctx: &Ctx, basis: &Rows, s: &SpaceSpec) -> Result<ApproximatingSequence> {
    match ctx.basis(basis, s)? {
        None => core(ApproximatingSequence::canonical(s)),
        Some(b) => core(ApproximatingSequence::from_basis(&b, s)),
    }
}

fn default_budget() -> usize {
    4096
}

fn default_rho() -> Vec<f64> {
    vec![2.0]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpnormInput {
    pub matrix: Rows,
    pub dom: String,
    pub cod: String,
    pub alpha: Option<f64>,
    pub tail: Option<usize>,
    pub restarts: Option<usize>,
}

pub fn opnorm(ctx: &Ctx, i: &OpnormInput, seed: u64) -> Result<Outcome> {
    let (dom, cod) = (space(&i.dom)?, space(&i.cod)?);
    let m = ctx.matrix(&i.matrix, cod.dim(), dom.dim())?;
    let a = core(Operator::new(m, dom.clone(), cod.clone()))?;
    let o = opts(seed, i.restarts);
    let est = op_norm(&a, &o);
    let mut result = to_value(&est);
    result["dom"] = json!(dom.to_string());
    result["cod"] = json!(cod.to_string());
    if i.tail.is_some() && i.alpha.is_none() {
        bail!("--tail needs --alpha");
    }
    if let Some(alpha) = i.alpha {
        if !(alpha > 0.0 && alpha <= 1.0) {
            bail!("alpha = {alpha} must lie in (0, 1]");
        }
        let tail = i.tail.map(|cutoff| TailModel { cutoff });
        result["alpha"] = json!(alpha);
        result["alpha_norm"] = json!(core(alpha_norm(&a, alpha, tail.as_ref(), &o))?);
        result["quotient"] = json!(core(quotient_seminorm(&a, tail.as_ref(), &o))?);
    }
    Ok(Outcome { result, ..Default::default() })
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsInput {
    pub basis: Rows,
    pub space: String,
    #[serde(default = "default_rho")]
    pub rho: Vec<f64>,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

pub fn constants(ctx: &Ctx, i: &ConstantsInput, seed: u64) -> Result<Outcome> {
    let s = space(&i.space)?;
    let seq = sequence(ctx, &i.basis, &s)?;
    let r = core(constants_of(&seq, &i.rho, i.budget, &opts(seed, None)))?;
    let mut table = Table::new("reflection", &["rho", "n", "defect"]);
    for e in &r.reflection {
        for (n, d) in e.per_n.iter().enumerate() {
            table.push(vec![e.rho.into(), (n + 1).into(), (*d).into()]);
        }
    }
    let mut result = to_value(&r);
    result["space"] = json!(s.to_string());
    Ok(Outcome { result, findings: r.findings.clone(), tables: vec![table] })
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameInput {
    pub space: String,
    pub basis: Rows,
    pub eps: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

/// Builds the frame; the frame file is returned next to the report.
pub fn frame_build(ctx: &Ctx, i: &FrameInput, seed: u64) -> Result<(Outcome, SchauderFrame)> {
    let s = space(&i.space)?;
    let seq = sequence(ctx, &i.basis, &s)?;
    let o = opts(seed, None);
    let (fr, plan) = core(dilate_to_frame(&seq, i.eps, i.budget, &o))?;
    let fb = frame_bound(&fr, &o);
    let bb = core(block_unconditional_bound(&fr, SignMode::Exhaustive, &o))?;
    let limit = plan.lambda + plan.eps;
    let mut findings = Vec::new();
    if !plan.constraints_hold() {
        findings.push("block repeats violate M >= 2 lambda + eps or C/M <= eps/(4 lambda + 2 eps)".into());
    }
    if fb.value > limit + 1e-6 {
        findings.push(format!("frame bound {} exceeds lambda + eps = {limit}", fb.value));
    }
    if bb.value > limit + 1e-6 {
        findings.push(format!("block unconditional bound {} exceeds lambda + eps = {limit}", bb.value));
    }
    let result = json!({
        "space": s.to_string(),
        "pairs": fr.len(),
        "blocks": fr.block_count(),
        "plan": to_value(&plan),
        "frame_bound": to_value(&fb),
        "block_bound": to_value(&bb),
        "lambda_plus_eps": limit,
    });
    Ok((Outcome { result, findings, tables: Vec::new() }, fr))
}

fn default_samples() -> usize {
    1000
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameCheckInput {
    pub frame: String,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub bound: Option<f64>,
}

pub fn load_frame(ctx: &Ctx, path: &str) -> Result<SchauderFrame> {
    let p = ctx.path(path);
    let text = std::fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("{} is not JSON", p.display()))?;
    core(SchauderFrame::from_json(&v))
}

pub fn frame_check(ctx: &Ctx, i: &FrameCheckInput, seed: u64) -> Result<Outcome> {
    let fr = load_frame(ctx, &i.frame)?;
    let o = opts(seed, None);
    let mut max_err = 0.0f64;
    let mut max_ratio = 0.0f64;
    for x in fr.space.sample_sphere(i.samples.max(1), rng::child(seed, 1)) {
        let r = core(fr.reconstruct(&x))?;
        max_err = max_err.max(r.error);
        max_ratio = max_ratio.max(r.max_partial);
    }
    let fb = frame_bound(&fr, &o);
    let bb = core(block_unconditional_bound(&fr, SignMode::Exhaustive, &o))?;
    let mut findings = Vec::new();
    if max_err > 1e-9 {
        findings.push(format!("reconstruction error {max_err} exceeds 1e-9"));
    }
    if let Some(b) = i.bound {
        if fb.value > b + 1e-6 {
            findings.push(format!("frame bound {} exceeds {b}", fb.value));
        }
        if bb.value > b + 1e-6 {
            findings.push(format!("block unconditional bound {} exceeds {b}", bb.value));
        }
    }
    let result = json!({
        "space": fr.space.to_string(),
        "pairs": fr.len(),
        "blocks": fr.block_count(),
        "samples": i.samples.max(1),
        "max_reconstruction_error": max_err,
        "max_partial_sum": max_ratio,
        "frame_bound": to_value(&fb),
        "block_bound": to_value(&bb),
    });
    Ok(Outcome { result, findings, tables: Vec::new() })
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DilateInput {
    pub space: String,
    pub basis: Rows,
    pub eps: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    pub search_samples: Option<usize>,
    pub ufdd_samples: Option<usize>,
    pub identity_samples: Option<usize>,
}

pub fn dilate(ctx: &Ctx, i: &DilateInput, seed: u64) -> Result<Outcome> {
    let s = space(&i.space)?;
    let seq = sequence(ctx, &i.basis, &s)?;
    let o = opts(seed, None);
    let (fr, plan) = core(dilate_to_frame(&seq, i.eps, i.budget, &o))?;
    let d = DilationOptions::default();
    let dopts = DilationOptions {
        samples: i.search_samples.unwrap_or(d.samples),
        ufdd_samples: i.ufdd_samples.unwrap_or(d.ufdd_samples),
        identity_samples: i.identity_samples.unwrap_or(d.identity_samples),
        seed,
        ..d
    };
    let r = core(dilation_report(&fr, plan.lambda + plan.eps, &dopts, &o))?;
    let mut result = to_value(&r);
    result["space"] = json!(s.to_string());
    result["lambda"] = json!(plan.lambda);
    result["eps"] = json!(plan.eps);
    result["pairs"] = json!(fr.len());
    result["blocks"] = json!(fr.block_count());
    Ok(Outcome { result, findings: r.findings.clone(), tables: Vec::new() })
}

fn default_m_max() -> usize {
    1
}

fn default_cap() -> usize {
    16
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateInput {
    pub dom: String,
    pub cod: String,
    pub eta: Option<f64>,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default = "default_samples")]
    pub limit: usize,
    pub functionals: Option<Rows>,
    pub vectors: Option<Rows>,
}

pub fn cover_generate(ctx: &Ctx, i: &GenerateInput, seed: u64) -> Result<Outcome> {
    let (dom, cod) = (space(&i.dom)?, space(&i.cod)?);
    let dual = dom.dual();
    let net = |explicit: &Option<Rows>, s: &SpaceSpec, what: &str| -> Result<Vec<DVector<f64>>> {
        match (explicit, i.eta) {
            (Some(r), _) => ctx.vectors(r, s.dim()),
            (None, Some(eta)) => Ok(core(unit_net(s, eta, i.cap))?.points),
            (None, None) => bail!("{what} net needs an explicit point list or --eta"),
        }
    };
    let fs = net(&i.functionals, &dual, "functional")?;
    let vs = net(&i.vectors, &cod, "vector")?;
    let o = opts(seed, None);
    let mut it = core(generate_bcp_points(&fs, &dual, &vs, &cod, i.m_max, &o))?;
    let mut centers = Vec::new();
    let mut findings = Vec::new();
    let mut table = Table::new("centers", &["id", "norm"]);
    for c in it.by_ref().take(i.limit) {
        let n = op_norm(&c, &o).lower;
        if (n - 2.0).abs() > 1e-9 {
            findings.push(format!("center {} has norm {n}", centers.len()));
        }
        table.push(vec![centers.len().into(), n.into()]);
        centers.push(json!({ "matrix": rows_of(&c.matrix), "norm": n }));
    }
    let truncated = it.next().is_some();
    let result = json!({
        "dom": dom.to_string(),
        "cod": cod.to_string(),
        "functional_net": fs.len(),
        "vector_net": vs.len(),
        "m_max": i.m_max,
        "count": centers.len(),
        "truncated": truncated,
        "centers": centers,
    });
    Ok(Outcome { result, findings, tables: vec![table] })
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Plain,
    Alpha,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverInput {
    pub dom: String,
    pub cod: String,
    pub side: Side,
    pub eps: f64,
    pub sigma: f64,
    pub mode: ModeName,
    pub alpha: Option<f64>,
    pub tail: Option<usize>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub eta: Option<f64>,
    /// Frame file on the chosen side; a canonical frame otherwise.
    pub frame: Option<String>,
    pub matrix: Option<Rows>,
    pub count: Option<usize>,
}

impl CoverInput {
    pub fn norm_mode(&self) -> Result<NormMode> {
        match (self.mode, self.alpha) {
            (ModeName::Plain, None) if self.tail.is_none() => Ok(NormMode::Plain),
            (ModeName::Plain, _) => bail!("plain mode takes no alpha or tail"),
            (ModeName::Alpha, Some(alpha)) => Ok(NormMode::Alpha { alpha, tail: self.tail.map(|cutoff| TailModel { cutoff }) }),
            (ModeName::Alpha, None) => bail!("alpha mode needs an explicit alpha"),
        }
    }

    pub fn params(&self) -> Result<(NormMode, CoverParams)> {
        let mode = self.norm_mode()?;
        let d = CoverParams::with_defaults(self.eps, self.sigma, &mode);
        let p = CoverParams { eps1: self.eps1.unwrap_or(d.eps1), eps2: self.eps2.unwrap_or(d.eps2), eta: self.eta, ..d };
        core(p.validate(&mode))?;
        Ok((mode, p))
    }
}

pub fn cover_one(ctx: &Ctx, i: &CoverInput, seed: u64) -> Result<Outcome> {
    let (dom, cod) = (space(&i.dom)?, space(&i.cod)?);
    let (mode, params) = i.params()?;
    let o = opts(seed, None);
    let home = match i.side {
        Side::Codomain => cod.clone(),
        Side::Domain => dom.clone(),
    };
    let frame = match &i.frame {
        Some(p) => load_frame(ctx, p)?,
        None => {
            let seq = core(ApproximatingSequence::canonical(&home))?;
            core(dilate_to_frame(&seq, params.eps1, default_budget(), &o))?.0
        }
    };
    let space = OperatorSpace { domain: dom.clone(), codomain: cod.clone(), mode: mode.clone() };
    let cov = core(Coverer::new(&frame, i.side, space.clone(), params.clone(), &o))?;
    let ts: Vec<Operator> = match (&i.matrix, i.count) {
        (Some(m), None) => vec![core(Operator::new(ctx.matrix(m, cod.dim(), dom.dim())?, dom.clone(), cod.clone()))?],
        (None, Some(n)) if n > 0 => sample_unit_operators(&space, n, seed, &o),
        (Some(_), Some(_)) => bail!("give either a matrix or a count, not both"),
        _ => bail!("give a matrix or a positive count"),
    };
    let target = match &mode {
        NormMode::Plain => 2.0,
        NormMode::Alpha { alpha, .. } => 2.0 * alpha,
    };
    let outs: Vec<_> = ts.par_iter().map(|t| cov.cover_one(t)).collect();
    let mut findings = Vec::new();
    let mut runs = Vec::new();
    let mut table = Table::new("runs", &["id", "distance", "bound", "margin"]);
    let (mut positive, mut min_margin, mut max_distance) = (0usize, f64::INFINITY, 0.0f64);
    for (id, (t, out)) in ts.iter().zip(outs).enumerate() {
        match out {
            Ok(out) => {
                if out.margin > 0.0 {
                    positive += 1;
                } else {
                    findings.push(format!("T#{id}: distance {} is not below the bound {}", out.distance, out.bound));
                }
                if (out.center_norm - target).abs() > 1e-9 {
                    findings.push(format!("T#{id}: center norm {} differs from {target}", out.center_norm));
                }
                if !out.xi_in_bracket {
                    findings.push(format!("T#{id}: xi = {} outside {:?}", out.xi, out.xi_bracket));
                }
                min_margin = min_margin.min(out.margin);
                max_distance = max_distance.max(out.distance);
                table.push(vec![id.into(), out.distance.into(), out.bound.into(), out.margin.into()]);
                let mut v = to_value(&out);
                v["id"] = json!(id);
                v["t"] = json!(rows_of(&t.matrix));
                v["center"] = json!(rows_of(&out.center.matrix));
                runs.push(v);
            }
            Err(e) => {
                findings.push(format!("T#{id}: {e}"));
                runs.push(json!({ "id": id, "error": e.to_string() }));
            }
        }
    }
    let mode_v = serde_json::to_value(&mode).expect("mode serializes");
    let result = json!({
        "dom": dom.to_string(),
        "cod": cod.to_string(),
        "side": i.side,
        "norm": mode_v,
        "params": to_value(&params),
        "hypothesis": to_value(&cov.hypothesis),
        "frame_pairs": frame.len(),
        "summary": {
            "runs": ts.len(),
            "positive_margins": positive,
            "min_margin": if min_margin.is_finite() { json!(min_margin) } else { Value::Null },
            "max_distance": max_distance,
            "bound": params.bound(),
        },
        "runs": runs,
    });
    Ok(Outcome { result, findings, tables: vec![table] })
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ball {
    pub center: Vec<Vec<f64>>,
    pub radius: f64,
}

/// A claimed covering: centers are matrices (codomain rows × domain columns).
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverFile {
    pub dom: String,
    pub cod: String,
    pub alpha: Option<f64>,
    pub tail: Option<usize>,
    pub claimed_r: f64,
    pub claimed_delta: f64,
    pub balls: Vec<Ball>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum CoverSource {
    Inline(CoverFile),
    File(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyInput {
    pub cover: CoverSource,
    pub samples: Option<usize>,
    pub restarts: Option<usize>,
    pub iters: Option<usize>,
}

pub fn cover_verify(ctx: &Ctx, i: &VerifyInput, seed: u64) -> Result<Outcome> {
    let file = match &i.cover {
        CoverSource::Inline(f) => f.clone(),
        CoverSource::File(p) => {
            let p = ctx.path(p);
            let text = std::fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("{} is not a cover file", p.display()))?
        }
    };
    let (dom, cod) = (space(&file.dom)?, space(&file.cod)?);
    let mode = match (file.alpha, file.tail) {
        (None, None) => NormMode::Plain,
        (Some(alpha), tail) => NormMode::Alpha { alpha, tail: tail.map(|cutoff| TailModel { cutoff }) },
        (None, Some(_)) => bail!("a tail needs alpha"),
    };
    let mut centers = Vec::new();
    for (k, b) in file.balls.iter().enumerate() {
        let m = ctx.matrix(&Rows::Nested(b.center.clone()), cod.dim(), dom.dim()).with_context(|| format!("ball {k}"))?;
        centers.push(core(Operator::new(m, dom.clone(), cod.clone()))?);
    }
    let radii = file.balls.iter().map(|b| b.radius).collect();
    let cover = core(BallCover::new(centers, radii, file.claimed_r, file.claimed_delta, mode.clone()))?;
    let d = VerifyOptions::default();
    let vo = VerifyOptions {
        samples: i.samples.unwrap_or(d.samples),
        restarts: i.restarts.unwrap_or(d.restarts),
        iters: i.iters.unwrap_or(d.iters),
        seed,
    };
    let space = OperatorSpace { domain: dom.clone(), codomain: cod.clone(), mode };
    let cert = core(verify_cover(&cover, &space, &vo, &opts(seed, None)))?;
    let mut findings = Vec::new();
    if cert.verdict != Verdict::Covered {
        findings.push(format!("verdict {:?}: max-min gap {}", cert.verdict, cert.max_min_gap).to_lowercase());
    }
    if !cert.off_origin {
        findings.push("some ball contains the origin".into());
    }
    if !cert.delta_separated {
        findings.push(format!("some ball meets B(0, {})", file.claimed_delta));
    }
    if !cert.radii_within_claim {
        findings.push(format!("some radius exceeds {}", file.claimed_r));
    }
    let mut result = to_value(&cert);
    result["dom"] = json!(dom.to_string());
    result["cod"] = json!(cod.to_string());
    Ok(Outcome { result, findings, tables: Vec::new() })
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Expectation {
    Feasible,
    Infeasible,
}

fn default_tol() -> f64 {
    1e-9
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BipInput {
    pub space: String,
    pub subspace: Rows,
    pub y: Rows,
    pub points: Rows,
    /// Radius surplus; exactly one of `eps` and `slack` is given.
    pub eps: Option<f64>,
    /// Diagnostic radius offset, any sign.
    pub slack: Option<f64>,
    #[serde(default)]
    pub three_point: bool,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub expect: Option<Expectation>,
}

fn status(o: &BipOutcome) -> &'static str {
    match o {
        BipOutcome::Feasible { .. } => "feasible",
        BipOutcome::Infeasible { .. } => "infeasible",
        BipOutcome::Inconclusive { .. } => "inconclusive",
    }
}

pub fn bip(ctx: &Ctx, i: &BipInput, _seed: u64) -> Result<Outcome> {
    let s = space(&i.space)?;
    let basis = ctx.vectors(&i.subspace, s.dim())?;
    let y = ctx.vector(&i.y, s.dim())?;
    let points = ctx.vectors(&i.points, s.dim())?;
    let inst = match (i.eps, i.slack) {
        (Some(eps), None) => core(BipInstance::new(s.clone(), basis, y, points, eps))?,
        (None, Some(slack)) => core(BipInstance::diagnostic(s.clone(), basis, y, points, slack))?,
        _ => bail!("give exactly one of eps and slack"),
    };
    let o = BipOptions { tol: i.tol, ..BipOptions::default() };
    let out = bip_feasible(&inst, &o);
    let mut findings = Vec::new();
    if let BipOutcome::Feasible { max_violation, .. } = &out {
        if *max_violation > i.tol.max(1e-6) {
            findings.push(format!("witness violates a ball by {max_violation}"));
        }
    }
    let mut result = json!({
        "space": s.to_string(),
        "radii": inst.radii(),
        "slack": inst.slack,
        "outcome": to_value(&out),
    });
    if i.three_point {
        let triples = bip_three_point(&inst, &o);
        let all = triples.iter().all(BipOutcome::is_feasible);
        if out.is_feasible() && triples.iter().any(|t| matches!(t, BipOutcome::Infeasible { .. })) {
            findings.push("feasible instance has an infeasible three-point sub-instance".into());
        }
        if matches!(out, BipOutcome::Infeasible { .. }) && all && inst.points.len() <= 3 {
            findings.push("infeasible instance with every three-point sub-instance feasible".into());
        }
        result["three_point"] = json!({
            "triples": triples.len(),
            "all_feasible": all,
            "statuses": triples.iter().map(status).collect::<Vec<_>>(),
        });
    }
    if let Some(e) = i.expect {
        let want = match e {
            Expectation::Feasible => "feasible",
            Expectation::Infeasible => "infeasible",
        };
        if status(&out) != want {
            findings.push(format!("expected {want}, got {}", status(&out)));
        }
    }
    Ok(Outcome { result, findings, tables: Vec::new() })
}
