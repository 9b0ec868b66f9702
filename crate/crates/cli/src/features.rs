//! Feature-matrix files.
//!
//! Text form: a header line
//! `GDNN-FEAT v1 <N> <k> <sentinel> targets=<t_1,…,t_k>` followed by `N`
//! rows of `k` space-separated decimals. Binary form: a `GDNN1` container
//! with a single `features` array. Files ending in `.bin` are written in
//! binary; readers detect the form from the first bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gdnn_core::{FeatureMatrix64, Matrix64, NodeId};

use crate::container::{Container, MAGIC};
use crate::error::{CliError, Result};

const HEADER: &str = "GDNN-FEAT v1";

pub fn format_targets(targets: &[NodeId]) -> String {
    if targets.is_empty() {
        return "-".into();
    }
    targets.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

pub fn parse_targets(s: &str) -> Option<Vec<NodeId>> {
    if s == "-" {
        return Some(Vec::new());
    }
    s.split(',').map(|t| t.parse().ok()).collect()
}

pub fn to_text(f: &FeatureMatrix64) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{HEADER} {} {} {} targets={}",
        f.num_nodes(),
        f.dim(),
        f.unreachable_sentinel,
        format_targets(&f.targets)
    )
    .unwrap();
    for r in 0..f.data.rows() {
        let row: Vec<String> = f.data.row(r).iter().map(f64::to_string).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn from_text(text: &str, origin: &Path) -> Result<FeatureMatrix64> {
    let bad = |m: String| CliError::format(origin, m);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty feature file".into()))?;
    let rest = header
        .strip_prefix(HEADER)
        .ok_or_else(|| bad(format!("expected `{HEADER}` header")))?;
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let [n, k, sentinel, targets] = fields[..] else {
        return Err(bad(format!("malformed header `{header}`")));
    };
    let n: usize = n.parse().map_err(|_| bad(format!("bad node count `{n}`")))?;
    let k: usize = k.parse().map_err(|_| bad(format!("bad column count `{k}`")))?;
    let sentinel: f64 = sentinel.parse().map_err(|_| bad(format!("bad sentinel `{sentinel}`")))?;
    let targets = targets
        .strip_prefix("targets=")
        .and_then(parse_targets)
        .ok_or_else(|| bad(format!("bad target list in `{header}`")))?;
    if targets.len() != k {
        return Err(bad(format!("{} targets for {k} columns", targets.len())));
    }
    let mut data = Vec::with_capacity(n * k);
    for (i, line) in lines.enumerate() {
        if i >= n {
            if line.trim().is_empty() {
                continue;
            }
            return Err(bad(format!("more than {n} rows")));
        }
        let before = data.len();
        for v in line.split_whitespace() {
            data.push(v.parse::<f64>().map_err(|_| bad(format!("row {}: bad value `{v}`", i + 1)))?);
        }
        if data.len() - before != k {
            return Err(bad(format!("row {} has {} values, expected {k}", i + 1, data.len() - before)));
        }
    }
    if data.len() != n * k {
        return Err(bad(format!("expected {n} rows")));
    }
    Ok(FeatureMatrix64 {
        data: Matrix64::from_vec(n, k, data)?,
        targets,
        unreachable_sentinel: sentinel,
    })
}

pub fn to_container(f: &FeatureMatrix64) -> Container {
    Container {
        meta: vec![
            ("kind".into(), "features".into()),
            ("sentinel".into(), f.unreachable_sentinel.to_string()),
            ("targets".into(), format_targets(&f.targets)),
        ],
        blob: String::new(),
        arrays: vec![("features".into(), f.data.clone())],
    }
}

pub fn from_container(c: &Container, origin: &Path) -> Result<FeatureMatrix64> {
    let bad = |m: &str| CliError::format(origin, m);
    if c.meta("kind") != Some("features") {
        return Err(bad("container does not hold features"));
    }
    let sentinel = c
        .meta("sentinel")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing sentinel"))?;
    let targets = c
        .meta("targets")
        .and_then(parse_targets)
        .ok_or_else(|| bad("missing targets"))?;
    let data = c.array("features").ok_or_else(|| bad("missing `features` array"))?.clone();
    if data.cols() != targets.len() {
        return Err(bad("target count does not match column count"));
    }
    Ok(FeatureMatrix64 {
        data,
        targets,
        unreachable_sentinel: sentinel,
    })
}

pub fn write(path: &Path, f: &FeatureMatrix64) -> Result<()> {
    if path.extension().is_some_and(|e| e == "bin") {
        to_container(f).save(path)
    } else {
        fs::write(path, to_text(f)).map_err(CliError::io(path))
    }
}

pub fn read(path: &Path) -> Result<FeatureMatrix64> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    if bytes.starts_with(format!("{MAGIC}\n").as_bytes()) {
        from_container(&Container::from_bytes(&bytes, path)?, path)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| CliError::format(path, "not UTF-8"))?;
        from_text(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gdnn_core::{encode_features, Graph};

    fn sample() -> FeatureMatrix64 {
        let g = Graph::build(&[(0u32, 1u32), (2, 3)], 5).unwrap();
        let mut f = encode_features::<f64>(&g, &[0, 3]).unwrap();
        f.data.set(4, 1, 0.1 + 0.2);
        f
    }

    #[test]
    fn text_round_trip() {
        let f = sample();
        let text = to_text(&f);
        assert!(text.starts_with("GDNN-FEAT v1 5 2 5 targets=0,3\n0 5\n1 5\n"));
        let back = from_text(&text, Path::new("f")).unwrap();
        assert_eq!(back, f);
        assert_eq!(to_text(&back), text);
    }

    #[test]
    fn binary_round_trip() {
        let f = sample();
        let c = to_container(&f);
        let back = from_container(&Container::from_bytes(&c.to_bytes(), Path::new("f")).unwrap(), Path::new("f")).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn malformed_text_is_rejected() {
        let p = Path::new("f");
        assert!(from_text("", p).is_err());
        assert!(from_text("GDNN-FEAT v1 1 1 1 targets=0\n0 1\n", p).is_err());
        assert!(from_text("GDNN-FEAT v1 2 1 2 targets=0\n0\n", p).is_err());
        assert!(from_text("GDNN-FEAT v1 1 2 1 targets=0\n0 1\n", p).is_err());
    }
}
