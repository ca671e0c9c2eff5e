//! Text formats: numeric matrices, outcome group specifications, scenario
//! files and delimited output tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::data::Design;
use crate::error::{Error, Result};
use crate::sim::SimulationScenario;
use crate::structure::OutcomeGrouping;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn cells(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Reads a dense or `%%sparse` matrix from `path`.
pub fn parse_matrix(path: impl AsRef<Path>) -> Result<Design> {
    let path = path.as_ref();
    parse_matrix_str(&read(path)?, path)
}

/// Parses matrix text; `origin` only labels error messages.
///
/// Dense input is comma- or whitespace-delimited with an optional header
/// row, detected by a non-numeric first line. Sparse input starts with
/// `%%sparse rows cols`, followed by 1-based `i j value` lines.
pub fn parse_matrix_str(text: &str, origin: &Path) -> Result<Design> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let Some(&(first_no, first)) = lines.first() else {
        return Err(parse_err(origin, 0, "empty file"));
    };
    if let Some(rest) = first.strip_prefix("%%sparse") {
        let dims: Vec<&str> = rest.split_whitespace().collect();
        let dim = |i: usize| -> Result<usize> {
            dims.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(origin, first_no, "expected '%%sparse <rows> <cols>'"))
        };
        let (rows, cols) = (dim(0)?, dim(1)?);
        if dims.len() != 2 {
            return Err(parse_err(origin, first_no, "expected '%%sparse <rows> <cols>'"));
        }
        let mut triplets = Vec::with_capacity(lines.len() - 1);
        for &(no, line) in &lines[1..] {
            let f = cells(line);
            if f.len() != 3 {
                return Err(parse_err(origin, no, format!("expected 'i j value', found {} fields", f.len())));
            }
            let index = |s: &str, bound: usize, what: &str| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(v) if (1..=bound).contains(&v) => Ok(v - 1),
                    _ => Err(parse_err(origin, no, format!("{what} index '{s}' not in 1..={bound}"))),
                }
            };
            let i = index(f[0], rows, "row")?;
            let j = index(f[1], cols, "column")?;
            let v: f64 = f[2]
                .parse()
                .map_err(|_| parse_err(origin, no, format!("column 3: '{}' is not a number", f[2])))?;
            triplets.push((i, j, v));
        }
        return Design::sparse_from_triplets(rows, cols, &triplets);
    }

    let numeric = |line: &str| cells(line).iter().all(|c| c.parse::<f64>().is_ok());
    let body = if numeric(first) { &lines[..] } else { &lines[1..] };
    if body.is_empty() {
        return Err(parse_err(origin, first_no, "header but no data rows"));
    }
    let ncols = cells(body[0].1).len();
    let mut values = Vec::with_capacity(body.len() * ncols);
    for &(no, line) in body {
        let row = cells(line);
        if row.len() != ncols {
            return Err(parse_err(origin, no, format!("ragged row: {} fields, expected {ncols}", row.len())));
        }
        for (c, cell) in row.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(origin, no, format!("column {}: '{cell}' is not a number", c + 1)))?;
            values.push(v);
        }
    }
    Ok(Design::Dense(DMatrix::from_row_slice(body.len(), ncols, &values)))
}

/// Reads a group specification for `k` outcomes.
pub fn parse_groups(path: impl AsRef<Path>, k: usize) -> Result<OutcomeGrouping> {
    let path = path.as_ref();
    parse_groups_str(&read(path)?, k, path)
}

/// Lines are `level:<m> outcomes:<i,j,...>` or `fuse: l,o`, with 1-based
/// outcomes; `#` starts a comment. Levels are numbered from 1 and must be
/// consecutive; the all-outcomes and singleton levels are added automatically.
pub fn parse_groups_str(text: &str, k: usize, origin: &Path) -> Result<OutcomeGrouping> {
    let mut levels: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut fuse: Vec<(usize, usize)> = Vec::new();
    let mut any_fuse = false;
    let outcome = |s: &str, no: usize| -> Result<usize> {
        match s.trim().parse::<usize>() {
            Ok(v) if (1..=k).contains(&v) => Ok(v - 1),
            _ => Err(parse_err(origin, no, format!("outcome '{}' not in 1..={k}", s.trim()))),
        }
    };
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("fuse:") {
            let ends: Vec<&str> = rest.split(',').collect();
            if ends.len() != 2 {
                return Err(parse_err(origin, no, "expected 'fuse: l,o'"));
            }
            fuse.push((outcome(ends[0], no)?, outcome(ends[1], no)?));
            any_fuse = true;
            continue;
        }
        let rest = line
            .strip_prefix("level:")
            .ok_or_else(|| parse_err(origin, no, "expected 'level:<m> outcomes:<list>' or 'fuse: l,o'"))?;
        let (lvl, members) = rest
            .split_once("outcomes:")
            .ok_or_else(|| parse_err(origin, no, "missing 'outcomes:'"))?;
        let m: usize = lvl
            .trim()
            .parse()
            .map_err(|_| parse_err(origin, no, format!("level '{}' is not a count", lvl.trim())))?;
        if m == 0 {
            return Err(parse_err(origin, no, "level 0 is implicit (all outcomes) and must not be given"));
        }
        let group: Vec<usize> = members
            .split(',')
            .map(|s| outcome(s, no))
            .collect::<Result<_>>()?;
        if levels.len() < m {
            levels.resize(m, Vec::new());
        }
        levels[m - 1].push(group);
    }
    if let Some(m) = levels.iter().position(Vec::is_empty) {
        return Err(parse_err(origin, 0, format!("level {} has no groups", m + 1)));
    }
    // A user level made only of singletons duplicates the implicit last level.
    if levels.last().is_some_and(|l| l.len() == k && l.iter().all(|g| g.len() == 1)) {
        return Err(parse_err(
            origin,
            0,
            format!("level {} is the implicit singleton level and must not be given", levels.len()),
        ));
    }
    OutcomeGrouping::build(k, &levels, any_fuse.then_some(&fuse[..]))
}

/// A scenario file plus the run settings it may carry.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioFile {
    pub scenario: SimulationScenario,
    pub reps: usize,
    pub seed: u64,
    /// Comma-separated method names; all methods when absent.
    pub methods: Option<Vec<crate::sim::Method>>,
}

/// Reads flat `key=value` lines with case-insensitive keys. Unknown keys
/// are errors; unset keys keep the paper preset.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<ScenarioFile> {
    let path = path.as_ref();
    parse_scenario_str(&read(path)?, path)
}

pub fn parse_scenario_str(text: &str, origin: &Path) -> Result<ScenarioFile> {
    let mut out = ScenarioFile {
        scenario: SimulationScenario::default(),
        reps: 10,
        seed: 42,
        methods: None,
    };
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(origin, no, "expected key=value"))?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim();
        let bad = |what: &str| parse_err(origin, no, format!("{key}: '{value}' is not {what}"));
        let count = || value.parse::<usize>().map_err(|_| bad("a count"));
        let real = || value.parse::<f64>().map_err(|_| bad("a number"));
        let sc = &mut out.scenario;
        match key.as_str() {
            "n" => sc.n = count()?,
            "p" => sc.p = count()?,
            "k" => sc.k = count()?,
            "z" => sc.z = Some(count()?),
            "p_hs" => sc.p_hs = real()?,
            "p_ge" => sc.p_ge = real()?,
            "family" => sc.family = value.parse().map_err(|_| bad("gaussian or ordinal"))?,
            "sigma_scale" => sc.sigma_scale = real()?,
            "ar_rho_x" => sc.ar_rho_x = real()?,
            "ar_rho_eps" => sc.ar_rho_eps = real()?,
            "test_size" => sc.test_size = count()?,
            "groups" => {
                sc.groups = value
                    .split(';')
                    .map(|g| {
                        g.split(',')
                            .map(|s| match s.trim().parse::<usize>() {
                                Ok(v) if v >= 1 => Ok(v - 1),
                                _ => Err(bad("a ';'-separated list of 1-based outcome groups")),
                            })
                            .collect()
                    })
                    .collect::<Result<_>>()?
            }
            "reps" => out.reps = count()?,
            "seed" => out.seed = value.parse().map_err(|_| bad("an unsigned integer"))?,
            "methods" => {
                out.methods = Some(
                    value
                        .split(',')
                        .map(|m| m.parse().map_err(|_| bad("a list of ogfm, ogfm_adaptive, separate_lasso")))
                        .collect::<Result<_>>()?,
                )
            }
            _ => return Err(parse_err(origin, no, format!("unknown key '{key}'"))),
        }
    }
    out.scenario
        .validate()
        .map_err(|e| parse_err(origin, 0, e.to_string()))?;
    Ok(out)
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v}")
    }
}

/// Comma-delimited table text with a header row.
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// `beta` (p x K) followed by an `intercept` row.
pub fn coefficients_csv(beta: &DMatrix<f64>, intercept: &nalgebra::DVector<f64>) -> String {
    let header: Vec<String> = std::iter::once("variable".to_string())
        .chain((1..=beta.ncols()).map(|k| format!("outcome_{k}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..beta.nrows())
        .map(|j| {
            std::iter::once((j + 1).to_string())
                .chain(beta.row(j).iter().map(|&v| fmt_f64(v)))
                .collect()
        })
        .chain(std::iter::once(
            std::iter::once("intercept".to_string())
                .chain(intercept.iter().map(|&v| fmt_f64(v)))
                .collect(),
        ));
    csv_table(&header, rows)
}

/// Parses a file written by [`coefficients_csv`] back into `(beta, intercept)`.
pub fn parse_coefficients(path: impl AsRef<Path>) -> Result<(DMatrix<f64>, nalgebra::DVector<f64>)> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut intercept = None;
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let vals: Vec<f64> = f[1..]
            .iter()
            .map(|s| s.parse().map_err(|_| parse_err(path, i + 1, format!("'{s}' is not a number"))))
            .collect::<Result<_>>()?;
        if f[0] == "intercept" {
            intercept = Some(nalgebra::DVector::from_vec(vals));
        } else {
            rows.push(vals);
        }
    }
    let intercept = intercept.ok_or_else(|| parse_err(path, 0, "missing intercept row"))?;
    let k = intercept.len();
    let flat: Vec<f64> = rows.concat();
    if flat.len() != rows.len() * k {
        return Err(parse_err(path, 0, "ragged coefficient rows"));
    }
    Ok((DMatrix::from_row_slice(rows.len(), k, &flat), intercept))
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp: PathBuf = dir.join(format!(".{name}.tmp"));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn origin() -> &'static Path {
        Path::new("test")
    }

    fn dense(text: &str) -> DMatrix<f64> {
        parse_matrix_str(text, origin()).unwrap().to_dense()
    }

    #[test]
    fn dense_formats() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(dense("1,2\n3,4"), m);
        assert_eq!(dense("1 2\n\n 3\t4 \n"), m);
        assert_eq!(dense("a,b\n1,2"), DMatrix::from_row_slice(1, 2, &[1.0, 2.0]));
        assert_eq!(dense("-1.5e-3, 2\n"), DMatrix::from_row_slice(1, 2, &[-1.5e-3, 2.0]));
    }

    #[test]
    fn sparse_format() {
        let d = parse_matrix_str("%%sparse 2 2\n1 1 5.0", origin()).unwrap();
        assert!(d.is_sparse());
        assert_eq!(d.to_dense(), DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 0.0]));
        let d = parse_matrix_str("%%sparse 3 2\n3 2 -1\n1,2,0.5", origin()).unwrap();
        assert_eq!(d.to_dense()[(2, 1)], -1.0);
        assert_eq!(d.to_dense()[(0, 1)], 0.5);
        assert!(parse_matrix_str("%%sparse 2 2\n3 1 1", origin()).is_err());
        assert!(parse_matrix_str("%%sparse 2\n1 1 1", origin()).is_err());
    }

    #[test]
    fn matrix_errors() {
        let msg = |t: &str| parse_matrix_str(t, origin()).unwrap_err().to_string();
        assert!(msg("").contains("empty file"));
        assert!(msg("\n  \n").contains("empty file"));
        assert!(msg("1,2\n3").contains("ragged"));
        let m = msg("1,2\n3,x");
        assert!(m.contains("line 2") && m.contains("column 2") && m.contains("'x'"), "{m}");
        assert!(msg("a,b").contains("no data"));
    }

    #[test]
    fn group_spec() {
        let text = "# paper preset\nlevel:1 outcomes:1,2,3\nlevel:1 outcomes:4,5\n\nlevel:1 outcomes:6,7,8 # last\n";
        let g = parse_groups_str(text, 8, origin()).unwrap();
        assert_eq!(g.groups().len(), 12);
        assert_eq!(g.fuse_pairs().len(), 7);
        let g = parse_groups_str("level:1 outcomes:1,2\nlevel:1 outcomes:3\nfuse: 1,3\n", 3, origin()).unwrap();
        assert_eq!(g.fuse_pairs(), &[(0, 2)]);
        let g = parse_groups_str("", 3, origin()).unwrap();
        assert_eq!(g.groups().len(), 4);
        assert!(g.fuse_pairs().is_empty());
    }

    #[test]
    fn group_spec_errors() {
        let err = |t: &str| parse_groups_str(t, 3, origin()).is_err();
        assert!(err("level:0 outcomes:1,2,3"));
        assert!(err("level:1 outcomes:1,2,4"));
        assert!(err("level:1 outcomes:1,2"));
        assert!(err("level:2 outcomes:1,2,3"));
        assert!(err("level:1 outcomes:1\nlevel:1 outcomes:2\nlevel:1 outcomes:3"));
        assert!(err("group 1,2,3"));
        assert!(err("fuse: 1"));
        assert!(err("fuse: 1,1"));
    }

    #[test]
    fn scenario_file() {
        let s = parse_scenario_str(
            "n=100\np=20\np_HS=0.5\np_GE=0.25\nfamily=ordinal\nreps=3\nseed=9\nmethods=ogfm,separate_lasso\n",
            origin(),
        )
        .unwrap();
        assert_eq!((s.scenario.n, s.scenario.p, s.reps, s.seed), (100, 20, 3, 9));
        assert_eq!(s.scenario.p_hs, 0.5);
        assert_eq!(s.scenario.family, crate::sim::ResponseFamily::Ordinal);
        assert_eq!(s.methods.unwrap().len(), 2);
        assert!(parse_scenario_str("bogus=1", origin()).is_err());
        assert!(parse_scenario_str("n=ten", origin()).is_err());
        assert!(parse_scenario_str("p_GE=2", origin()).is_err());
        let g = parse_scenario_str("k=4\ngroups=1,2;3,4", origin()).unwrap();
        assert_eq!(g.scenario.groups, vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn atomic_write_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coefficients.csv");
        let beta = DMatrix::from_row_slice(2, 2, &[0.1, -1.0 / 3.0, 1e-300, 0.0]);
        let b0 = nalgebra::DVector::from_vec(vec![std::f64::consts::PI, -2.5]);
        write_atomic(&path, &coefficients_csv(&beta, &b0)).unwrap();
        let (b, i) = parse_coefficients(&path).unwrap();
        assert_eq!(b, beta);
        assert_eq!(i, b0);
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    proptest! {
        #[test]
        fn float_text_roundtrip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }

        #[test]
        fn dense_roundtrip(vals in proptest::collection::vec(-1e6f64..1e6, 6)) {
            let m = DMatrix::from_row_slice(2, 3, &vals);
            let text: String = (0..2)
                .map(|i| m.row(i).iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(",") + "\n")
                .collect();
            prop_assert_eq!(dense(&text), m);
        }
    }
}
