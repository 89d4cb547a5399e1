//! `lp:p=<float|inf>:n=<int>`, `wlp:p=...:w=<csv>`, `sum:p=...:[<spec>;<spec>;...]`.

use std::str::FromStr;

use super::{Exponent, SpaceSpec};
use crate::{Error, Result};

fn bad(s: &str, why: &str) -> Error {
    Error::InvalidSpec(format!("`{s}`: {why}"))
}

fn parse_exponent(v: &str) -> Result<Exponent> {
    match v.trim() {
        "inf" | "infinity" | "∞" => Ok(Exponent::Infinity),
        t => {
            let p: f64 = t.parse().map_err(|_| bad(t, "exponent is not a number"))?;
            Exponent::new(p)
        }
    }
}

fn field<'a>(src: &str, part: Option<&'a str>, key: &str) -> Result<&'a str> {
    let part = part.ok_or_else(|| bad(src, &format!("missing `{key}=`")))?;
    part.strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| bad(src, &format!("expected `{key}=`, found `{part}`")))
}

/// Split on `;` at bracket depth zero.
fn split_top(s: &str) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth < 0 {
                    return Err(bad(s, "unbalanced brackets"));
                }
            }
            ';' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(bad(s, "unbalanced brackets"));
    }
    out.push(&s[start..]);
    Ok(out)
}

impl FromStr for SpaceSpec {
    type Err = Error;

    fn from_str(src: &str) -> Result<Self> {
        let src = src.trim();
        let (kind, rest) = src.split_once(':').ok_or_else(|| bad(src, "missing kind"))?;
        let spec = match kind {
            "lp" => {
                let mut parts = rest.split(':');
                let p = parse_exponent(field(src, parts.next(), "p")?)?;
                let n = field(src, parts.next(), "n")?;
                let dim = n.trim().parse().map_err(|_| bad(src, "dimension is not an integer"))?;
                if parts.next().is_some() {
                    return Err(bad(src, "trailing fields"));
                }
                SpaceSpec::Lp { p, dim }
            }
            "wlp" => {
                let mut parts = rest.split(':');
                let p = parse_exponent(field(src, parts.next(), "p")?)?;
                let w = field(src, parts.next(), "w")?;
                let weights = w
                    .split(',')
                    .map(|t| t.trim().parse::<f64>().map_err(|_| bad(src, "weight is not a number")))
                    .collect::<Result<Vec<_>>>()?;
                if parts.next().is_some() {
                    return Err(bad(src, "trailing fields"));
                }
                SpaceSpec::WeightedLp { p, weights }
            }
            "sum" => {
                let (pfield, body) = rest.split_once(':').ok_or_else(|| bad(src, "missing block list"))?;
                let p = parse_exponent(field(src, Some(pfield), "p")?)?;
                let inner = body
                    .trim()
                    .strip_prefix('[')
                    .and_then(|b| b.strip_suffix(']'))
                    .ok_or_else(|| bad(src, "block list must be bracketed"))?;
                let blocks = split_top(inner)?
                    .into_iter()
                    .map(str::parse)
                    .collect::<Result<Vec<SpaceSpec>>>()?;
                SpaceSpec::LpSum { p, blocks }
            }
            other => return Err(bad(src, &format!("unknown kind `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}
