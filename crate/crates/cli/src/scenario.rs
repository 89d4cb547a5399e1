//! TOML scenarios: one pipeline, its inputs, a seed and optional expectations
//! checked against the report.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::input::Ctx;
use crate::pipelines::{self, Outcome};
use crate::report::{normalize, Table};

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Opnorm,
    Constants,
    Frame,
    FrameCheck,
    Dilate,
    Cover,
    CoverGenerate,
    CoverVerify,
    Bip,
}

impl Pipeline {
    fn key(self) -> &'static str {
        match self {
            Pipeline::Opnorm => "opnorm",
            Pipeline::Constants => "constants",
            Pipeline::Frame => "frame",
            Pipeline::FrameCheck => "frame_check",
            Pipeline::Dilate => "dilate",
            Pipeline::Cover => "cover",
            Pipeline::CoverGenerate => "cover_generate",
            Pipeline::CoverVerify => "cover_verify",
            Pipeline::Bip => "bip",
        }
    }
}

/// A check on one report field, addressed by a dotted path.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    pub field: String,
    pub equals: Option<toml::Value>,
    /// Tolerance for numeric `equals`; exact when absent.
    pub tol: Option<f64>,
    pub at_most: Option<f64>,
    pub at_least: Option<f64>,
    pub above: Option<f64>,
    pub below: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub description: Option<String>,
    pub pipeline: Pipeline,
    pub seed: u64,
    pub opnorm: Option<pipelines::OpnormInput>,
    pub constants: Option<pipelines::ConstantsInput>,
    pub frame: Option<pipelines::FrameInput>,
    pub frame_check: Option<pipelines::FrameCheckInput>,
    pub dilate: Option<pipelines::DilateInput>,
    pub cover: Option<pipelines::CoverInput>,
    pub cover_generate: Option<pipelines::GenerateInput>,
    pub cover_verify: Option<pipelines::VerifyInput>,
    pub bip: Option<pipelines::BipInput>,
    #[serde(default)]
    pub expect: Vec<Expect>,
}

impl Scenario {
    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let mut add = |on: bool, k| {
            if on {
                v.push(k)
            }
        };
        add(self.opnorm.is_some(), "opnorm");
        add(self.constants.is_some(), "constants");
        add(self.frame.is_some(), "frame");
        add(self.frame_check.is_some(), "frame_check");
        add(self.dilate.is_some(), "dilate");
        add(self.cover.is_some(), "cover");
        add(self.cover_generate.is_some(), "cover_generate");
        add(self.cover_verify.is_some(), "cover_verify");
        add(self.bip.is_some(), "bip");
        v
    }

    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).context("malformed scenario")?;
        let present = s.present();
        let key = s.pipeline.key();
        if present != [key] {
            bail!("pipeline `{key}` needs exactly one `[{key}]` table, found {present:?}");
        }
        if let Some(c) = &s.cover {
            c.params()?;
        }
        for e in &s.expect {
            let n = [e.equals.is_some(), e.at_most.is_some(), e.at_least.is_some(), e.above.is_some(), e.below.is_some()];
            if !n.iter().any(|b| *b) {
                bail!("expectation on `{}` has no comparison", e.field);
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<(Self, Ctx)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let s = Self::parse(&text).with_context(|| path.display().to_string())?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| ".".into());
        Ok((s, Ctx { base }))
    }

    pub fn execute(&self, ctx: &Ctx) -> Result<Outcome> {
        let seed = self.seed;
        match self.pipeline {
            Pipeline::Opnorm => pipelines::opnorm(ctx, self.opnorm.as_ref().expect("checked"), seed),
            Pipeline::Constants => pipelines::constants(ctx, self.constants.as_ref().expect("checked"), seed),
            Pipeline::Frame => {
                let (mut o, fr) = pipelines::frame_build(ctx, self.frame.as_ref().expect("checked"), seed)?;
                o.result["frame"] = fr.to_json();
                Ok(o)
            }
            Pipeline::FrameCheck => pipelines::frame_check(ctx, self.frame_check.as_ref().expect("checked"), seed),
            Pipeline::Dilate => pipelines::dilate(ctx, self.dilate.as_ref().expect("checked"), seed),
            Pipeline::Cover => pipelines::cover_one(ctx, self.cover.as_ref().expect("checked"), seed),
            Pipeline::CoverGenerate => pipelines::cover_generate(ctx, self.cover_generate.as_ref().expect("checked"), seed),
            Pipeline::CoverVerify => pipelines::cover_verify(ctx, self.cover_verify.as_ref().expect("checked"), seed),
            Pipeline::Bip => pipelines::bip(ctx, self.bip.as_ref().expect("checked"), seed),
        }
    }
}

fn lookup<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(v, |cur, seg| match seg.parse::<usize>() {
        Ok(i) => cur.get(i),
        Err(_) => cur.get(seg),
    })
}

fn toml_to_json(v: &toml::Value) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Evaluates every expectation; returns the assertion records.
pub fn check(expect: &[Expect], result: &Value) -> Vec<Value> {
    expect
        .iter()
        .map(|e| {
            let actual = lookup(result, &e.field).cloned();
            let x = actual.as_ref().and_then(Value::as_f64);
            let mut failures = Vec::new();
            match &actual {
                None => failures.push("field missing".to_string()),
                Some(a) => {
                    if let Some(want) = &e.equals {
                        let want = toml_to_json(want);
                        let ok = match (want.as_f64(), x) {
                            (Some(w), Some(x)) => (w - x).abs() <= e.tol.unwrap_or(0.0),
                            _ => want == *a,
                        };
                        if !ok {
                            failures.push(format!("expected {want}"));
                        }
                    }
                    for (name, bound, ok) in [
                        ("at most", e.at_most, &(|x: f64, b: f64| x <= b) as &dyn Fn(f64, f64) -> bool),
                        ("at least", e.at_least, &|x, b| x >= b),
                        ("above", e.above, &|x, b| x > b),
                        ("below", e.below, &|x, b| x < b),
                    ] {
                        if let Some(b) = bound {
                            match x {
                                Some(x) if ok(x, b) => {}
                                Some(_) => failures.push(format!("expected {name} {b}")),
                                None => failures.push("not a number".into()),
                            }
                        }
                    }
                }
            }
            json!({
                "field": e.field,
                "actual": actual.unwrap_or(Value::Null),
                "pass": failures.is_empty(),
                "failures": failures,
            })
        })
        .collect()
}

pub struct RunReport {
    pub json: Value,
    pub tables: Vec<Table>,
    pub pass: bool,
}

pub fn run(s: &Scenario, ctx: &Ctx) -> Result<RunReport> {
    let out = s.execute(ctx)?;
    let result = normalize(out.result);
    let assertions = check(&s.expect, &result);
    let mut findings = out.findings;
    for a in &assertions {
        if a["pass"] == json!(false) {
            findings.push(format!("expectation on `{}` failed: {}", a["field"].as_str().unwrap_or(""), a["failures"]));
        }
    }
    let pass = findings.is_empty();
    let json = json!({
        "scenario": s.name,
        "description": s.description,
        "pipeline": s.pipeline.key(),
        "seed": s.seed,
        "result": result,
        "assertions": assertions,
        "findings": findings,
        "pass": pass,
    });
    Ok(RunReport { json, tables: out.tables, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "t"
pipeline = "cover"
seed = 1
[cover]
dom = "lp:p=2:n=2"
cod = "lp:p=2:n=2"
side = "codomain"
count = 3
"#;

    #[test]
    fn cover_needs_explicit_parameters() {
        assert!(Scenario::parse(BASE).is_err());
        let ok = format!("{BASE}eps = 1.0\nsigma = 0.2\nmode = \"plain\"\n");
        assert!(Scenario::parse(&ok).is_ok());
        let no_alpha = format!("{BASE}eps = 1.0\nsigma = 0.2\nmode = \"alpha\"\n");
        assert!(Scenario::parse(&no_alpha).is_err());
        let bad_sigma = format!("{BASE}eps = 1.0\nsigma = 2.0\nmode = \"plain\"\n");
        assert!(Scenario::parse(&bad_sigma).is_err());
    }

    #[test]
    fn pipeline_table_must_match() {
        let s = BASE.replace("pipeline = \"cover\"", "pipeline = \"bip\"");
        assert!(Scenario::parse(&format!("{s}eps = 1.0\nsigma = 0.2\nmode = \"plain\"\n")).is_err());
    }

    #[test]
    fn expectations() {
        let r = json!({"ubc": 3.0, "summary": {"runs": 2}, "runs": [{"margin": 0.1}], "ok": true});
        let ex: Vec<Expect> = toml::from_str::<toml::Table>(
            r#"
[[e]]
field = "ubc"
equals = 3.0
[[e]]
field = "runs.0.margin"
above = 0.0
[[e]]
field = "ok"
equals = true
[[e]]
field = "summary.runs"
at_least = 3
[[e]]
field = "missing"
below = 1
"#,
        )
        .unwrap()["e"]
            .clone()
            .try_into()
            .unwrap();
        let got: Vec<bool> = check(&ex, &r).iter().map(|a| a["pass"].as_bool().unwrap()).collect();
        assert_eq!(got, vec![true, true, true, false, false]);
    }
}
