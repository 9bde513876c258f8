//! CSV export and re-import of trajectory logs.
//!
//! One header row, then one row per step. Vector fields expand to `name_0`,
//! `name_1`, …; booleans are `0`/`1`; reals use 17 significant digits so a
//! round trip is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;

use super::run::{TrajectoryLog, TrajectoryRow};
use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dims {
    n_x: usize,
    n_u: usize,
    n_l: usize,
    n_g: usize,
    has_y: bool,
}

fn vec_names(out: &mut Vec<String>, name: &str, n: usize) {
    out.extend((0..n).map(|i| format!("{name}_{i}")));
}

fn header(d: Dims) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    vec_names(&mut h, "x", d.n_x);
    vec_names(&mut h, "u", d.n_u);
    vec_names(&mut h, "s", d.n_u);
    h.push("s_norm".into());
    vec_names(&mut h, "l", d.n_l);
    vec_names(&mut h, "g", d.n_g);
    h.push("mu0".into());
    vec_names(&mut h, "varpi_hat", d.n_u);
    h.extend(["residual_norm", "in_band", "clamped", "fallback", "omega"].map(String::from));
    vec_names(&mut h, "delta_x", d.n_x);
    vec_names(&mut h, "delta_u", d.n_u);
    if d.has_y {
        h.push("y".into());
    }
    h
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn dims_of(log: &TrajectoryLog) -> Option<Dims> {
    log.rows.first().map(|r| Dims {
        n_x: r.x.len(),
        n_u: r.u.len(),
        n_l: r.l.len(),
        n_g: r.g.len(),
        has_y: r.y.is_some(),
    })
}

/// Column names for a log.
pub fn csv_header(log: &TrajectoryLog) -> Vec<String> {
    dims_of(log).map(header).unwrap_or_default()
}

pub fn write_csv<W: Write>(log: &TrajectoryLog, out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let Some(d) = dims_of(log) else {
        return w.flush().map_err(Into::into);
    };
    w.write_record(header(d))?;
    for r in &log.rows {
        let mut rec: Vec<String> = vec![r.k.to_string()];
        let b = |v: bool| if v { "1".to_string() } else { "0".to_string() };
        rec.extend(r.x.iter().map(|v| fmt(*v)));
        rec.extend(r.u.iter().map(|v| fmt(*v)));
        rec.extend(r.s.iter().map(|v| fmt(*v)));
        rec.push(fmt(r.s_norm));
        rec.extend(r.l.iter().map(|v| fmt(*v)));
        rec.extend(r.g.iter().map(|v| fmt(*v)));
        rec.push(fmt(r.mu0));
        rec.extend(r.varpi_hat.iter().map(|v| fmt(*v)));
        rec.push(fmt(r.residual_norm));
        rec.push(b(r.in_band));
        rec.push(b(r.clamped));
        rec.push(b(r.fallback));
        rec.push(fmt(r.omega));
        rec.extend(r.delta_x.iter().map(|v| fmt(*v)));
        rec.extend(r.delta_u.iter().map(|v| fmt(*v)));
        if let Some(y) = r.y {
            rec.push(fmt(y));
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(log: &TrajectoryLog) -> String {
    let mut buf = Vec::new();
    write_csv(log, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is ASCII")
}

pub fn export_csv(log: &TrajectoryLog, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let io_err = |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_csv(log, std::io::BufWriter::new(file)).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(source),
        other => HarnessError::Csv {
            line: 0,
            message: format!("{other:?}"),
        },
    })
}

fn count(names: &[String], prefix: &str) -> usize {
    let p = format!("{prefix}_");
    names
        .iter()
        .filter(|n| {
            n.strip_prefix(&p)
                .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|c| c.is_ascii_digit()))
        })
        .count()
}

/// Parses a file written by [`write_csv`].
pub fn parse_csv<R: Read>(input: R) -> Result<TrajectoryLog, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| HarnessError::Csv { line: 1, message: e.to_string() })?
        .iter()
        .map(String::from)
        .collect();
    let d = Dims {
        n_x: count(&names, "x"),
        n_u: count(&names, "u"),
        n_l: count(&names, "l"),
        n_g: count(&names, "g"),
        has_y: names.iter().any(|n| n == "y"),
    };
    if header(d) != names {
        return Err(HarnessError::Csv {
            line: 1,
            message: "header does not match the trajectory schema".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| HarnessError::Csv { line, message: e.to_string() })?;
        let mut it = rec.iter();
        let mut next = |what: &str| {
            it.next().ok_or_else(|| HarnessError::Csv {
                line,
                message: format!("missing field {what}"),
            })
        };
        let mut real = |what: &str| -> Result<f64, HarnessError> {
            let f = next(what)?;
            f.parse::<f64>().map_err(|e| HarnessError::Csv {
                line,
                message: format!("{what}: {e}"),
            })
        };
        let mut vector = |what: &str, n: usize| -> Result<DVector<f64>, HarnessError> {
            let mut v = DVector::zeros(n);
            for j in 0..n {
                v[j] = real(what)?;
            }
            Ok(v)
        };
        let k = vector("k", 1)?[0];
        let x = vector("x", d.n_x)?;
        let u = vector("u", d.n_u)?;
        let s = vector("s", d.n_u)?;
        let s_norm = vector("s_norm", 1)?[0];
        let l = vector("l", d.n_l)?;
        let g = vector("g", d.n_g)?;
        let mu0 = vector("mu0", 1)?[0];
        let varpi_hat = vector("varpi_hat", d.n_u)?;
        let residual_norm = vector("residual_norm", 1)?[0];
        let flags = vector("flags", 3)?;
        let omega = vector("omega", 1)?[0];
        let delta_x = vector("delta_x", d.n_x)?;
        let delta_u = vector("delta_u", d.n_u)?;
        let y = if d.has_y { Some(vector("y", 1)?[0]) } else { None };
        rows.push(TrajectoryRow {
            k: k as usize,
            x,
            u,
            s,
            s_norm,
            l,
            g,
            mu0,
            varpi_hat,
            residual_norm,
            in_band: flags[0] != 0.0,
            clamped: flags[1] != 0.0,
            fallback: flags[2] != 0.0,
            omega,
            delta_x,
            delta_u,
            y,
        });
    }
    Ok(TrajectoryLog { rows })
}

pub fn import_csv(path: impl AsRef<Path>) -> Result<TrajectoryLog, HarnessError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::example1_config;
    use crate::harness::run::run_experiment;
    use proptest::prelude::*;

    fn zero_row() -> TrajectoryRow {
        TrajectoryRow {
            k: 0,
            x: DVector::zeros(3),
            u: DVector::zeros(1),
            s: DVector::zeros(1),
            s_norm: 0.0,
            l: DVector::zeros(2),
            g: DVector::zeros(2),
            mu0: 0.1,
            varpi_hat: DVector::zeros(1),
            residual_norm: 0.0,
            in_band: true,
            clamped: false,
            fallback: false,
            omega: 0.03,
            delta_x: DVector::zeros(3),
            delta_u: DVector::zeros(1),
            y: None,
        }
    }

    #[test]
    fn one_step_log_is_two_lines() {
        let text = to_csv_string(&TrajectoryLog { rows: vec![zero_row()] });
        assert_eq!(text.lines().count(), 2);
        assert!(text.ends_with('\n') && !text.contains('\r'));
        assert!(text.starts_with("k,x_0,x_1,x_2,u_0,s_0,s_norm,l_0,l_1,g_0,g_1,mu0,varpi_hat_0,residual_norm,in_band,clamped,fallback,omega,delta_x_0,delta_x_1,delta_x_2,delta_u_0\n"));
    }

    #[test]
    fn example_schema_and_round_trip() {
        let log = run_experiment(&example1_config(0.8, true)).unwrap();
        let text = to_csv_string(&log);
        assert_eq!(text.lines().count(), 151);
        let head = text.lines().next().unwrap();
        assert!(head.split(',').any(|c| c == "s_norm"));
        assert!(head.split(',').any(|c| c == "in_band"));
        let back = parse_csv(text.as_bytes()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(parse_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn reals_round_trip_bitwise(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, y in -1e300f64..1e300) {
            let mut r = zero_row();
            r.x[1] = v;
            r.mu0 = v;
            r.y = Some(y);
            let log = TrajectoryLog { rows: vec![r] };
            let back = parse_csv(to_csv_string(&log).as_bytes()).unwrap();
            prop_assert_eq!(back.rows[0].x[1].to_bits(), v.to_bits());
            prop_assert_eq!(back, log);
        }
    }
}
