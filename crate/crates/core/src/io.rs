//! File formats: panel CSV, parameter JSON and adjacency edge lists.
//!
//! Panel CSV columns are `t,s,y,x1..xq`. Sample periods are `t = 1..T`,
//! presample periods `t = 1-p..0` (their `x` fields may be empty) and
//! locations `s = 0..n-1`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{PanelData, ParameterVector};

pub fn write_panel<W: Write>(out: W, data: &PanelData) -> Result<()> {
    let q = data.q();
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "s".to_string(), "y".to_string()];
    header.extend((1..=q).map(|k| format!("x{k}")));
    wtr.write_record(&header)?;
    let p = data.p as i64;
    for (j, y) in data.y.iter().enumerate() {
        let t = j as i64 - p + 1;
        for s in 0..data.n() {
            let mut rec = vec![t.to_string(), s.to_string(), format!("{:?}", y[s])];
            if t >= 1 {
                let x = &data.x[(t - 1) as usize];
                rec.extend((0..q).map(|k| format!("{:?}", x[(s, k)])));
            } else {
                rec.extend(std::iter::repeat_n(String::new(), q));
            }
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_panel_file(path: &Path, data: &PanelData) -> Result<()> {
    write_panel(std::fs::File::create(path)?, data)
}

/// Parse a panel. `p` is the number of presample periods expected; when
/// `None` it is inferred from the smallest `t`.
pub fn read_panel<R: Read>(input: R, p: Option<usize>) -> Result<PanelData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 3 || names[0] != "t" || names[1] != "s" || names[2] != "y" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header must start with t,s,y; found {}", names.join(",")),
        });
    }
    for (k, name) in names[3..].iter().enumerate() {
        if *name != format!("x{}", k + 1) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected column x{}, found {name:?}", k + 1),
            });
        }
    }
    let q = names.len() - 3;

    let mut rows: BTreeMap<i64, BTreeMap<usize, (f64, Option<Vec<f64>>)>> = BTreeMap::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if rec.len() != 3 + q {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", 3 + q, rec.len()),
            });
        }
        let field = |i: usize| rec.get(i).unwrap_or("");
        let t: i64 = field(0).parse().map_err(|e| Error::Parse {
            line,
            msg: format!("t = {:?}: {e}", field(0)),
        })?;
        let s: usize = field(1).parse().map_err(|e| Error::Parse {
            line,
            msg: format!("s = {:?}: {e}", field(1)),
        })?;
        let y: f64 = parse_number(field(2), line, "y")?;
        let x = if t >= 1 {
            Some(
                (0..q)
                    .map(|k| parse_number(field(3 + k), line, &format!("x{}", k + 1)))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        if rows.entry(t).or_default().insert(s, (y, x)).is_some() {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate row for t = {t}, s = {s}"),
            });
        }
    }
    let (&t_min, first) = rows
        .iter()
        .next()
        .ok_or_else(|| Error::invalid("panel CSV has no data rows"))?;
    let n = first.len();
    let t_max = *rows.keys().next_back().expect("nonempty");
    if t_max < 1 {
        return Err(Error::invalid("panel has no sample periods (t >= 1)"));
    }
    let p_found = (1 - t_min.min(1)) as usize;
    let p = match p {
        Some(p) if p > p_found => {
            return Err(Error::invalid(format!(
                "model needs {p} presample periods, panel has {p_found}"
            )))
        }
        Some(p) => p,
        None => p_found,
    };
    let t_start = 1 - p as i64;
    let mut y = Vec::new();
    let mut x = Vec::new();
    for t in t_start..=t_max {
        let slice = rows
            .get(&t)
            .ok_or_else(|| Error::invalid(format!("panel is missing period t = {t}")))?;
        if slice.len() != n || slice.keys().next_back() != Some(&(n - 1)) {
            return Err(Error::invalid(format!(
                "period t = {t} has locations that do not cover 0..{}",
                n - 1
            )));
        }
        y.push(DVector::from_iterator(n, slice.values().map(|v| v.0)));
        if t >= 1 {
            let mut m = DMatrix::zeros(n, q);
            for (s, (_, xs)) in slice {
                let xs = xs.as_ref().expect("sample rows carry covariates");
                for k in 0..q {
                    m[(*s, k)] = xs[k];
                }
            }
            x.push(m);
        }
    }
    PanelData::new(y, x, p)
}

pub fn read_panel_file(path: &Path, p: Option<usize>) -> Result<PanelData> {
    read_panel(std::fs::File::open(path)?, p)
}

fn parse_number(field: &str, line: usize, name: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|e| Error::Parse {
        line,
        msg: format!("{name} = {field:?}: {e}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("{name} is not finite"),
        });
    }
    Ok(v)
}

pub fn write_params(path: &Path, theta: &ParameterVector) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(theta)?)?;
    Ok(())
}

pub fn read_params(path: &Path) -> Result<ParameterVector> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Edge list `i,j` (0-based); a non-numeric first line is taken as a header.
pub fn read_adjacency<R: Read>(input: R) -> Result<Vec<(usize, usize)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 1;
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let parsed: std::result::Result<Vec<usize>, _> = rec.iter().map(str::parse::<usize>).collect();
        match parsed {
            Ok(v) => out.push((v[0], v[1])),
            Err(_) if idx == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    msg: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

pub fn read_adjacency_file(path: &Path) -> Result<Vec<(usize, usize)>> {
    read_adjacency(std::fs::File::open(path)?)
}
