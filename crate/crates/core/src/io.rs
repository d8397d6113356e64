//! CSV ingestion and emission.
//!
//! Input schema for datasets: `item,x,y` (header required, one row per
//! observation, rows of an item contiguous). Output schemas are documented
//! in docs/formats.md; floats are written with shortest-roundtrip
//! formatting so reruns produce byte-identical files.

use std::io::{Read, Write};

use crate::asymptotics::LimitSurface;
use crate::error::{Error, Result};
use crate::laplace::{GapRow, LaplaceErrRow};
use crate::likelihood::{Dataset, FitResult};
use crate::model::ClusterData;
use crate::sim::SimReport;

/// Parse a dataset from `item,x,y` CSV.
pub fn read_dataset_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    {
        let headers = rdr
            .headers()
            .map_err(|e| csv_err(1, format!("cannot read header: {e}")))?;
        let expected = ["item", "x", "y"];
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(csv_err(
                1,
                format!("header must be `item,x,y`, got `{}`", got.join(",")),
            ));
        }
    }

    let mut clusters: Vec<ClusterData> = Vec::new();
    let mut seen: std::collections::HashSet<String> = std::collections::HashSet::new();
    let mut current: Option<(String, f64, Vec<u8>)> = None;

    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(csv_err(line, format!("expected 3 fields, got {}", rec.len())));
        }
        let item = rec[0].to_string();
        let x: f64 = rec[1]
            .parse()
            .map_err(|_| csv_err(line, format!("bad x value `{}`", &rec[1])))?;
        let y: u8 = match &rec[2] {
            "0" => 0,
            "1" => 1,
            other => return Err(csv_err(line, format!("y must be 0 or 1, got `{other}`"))),
        };

        match current.as_mut() {
            Some((id, cx, ys)) if *id == item => {
                if *cx != x {
                    return Err(csv_err(
                        line,
                        format!("item `{item}` has inconsistent x ({cx} vs {x})"),
                    ));
                }
                ys.push(y);
            }
            _ => {
                if let Some((id, cx, ys)) = current.take() {
                    clusters.push(ClusterData::new(cx, ys).map_err(|e| csv_err(line, e.to_string()))?);
                    seen.insert(id);
                }
                if seen.contains(&item) {
                    return Err(csv_err(
                        line,
                        format!("rows of item `{item}` are not contiguous"),
                    ));
                }
                current = Some((item, x, vec![y]));
            }
        }
    }
    if let Some((_, cx, ys)) = current.take() {
        clusters.push(ClusterData::new(cx, ys).map_err(|e| csv_err(0, e.to_string()))?);
    }
    if clusters.is_empty() {
        return Err(csv_err(1, "no data rows".into()));
    }
    Dataset::new(clusters).map_err(|e| match e {
        Error::InvalidInput(msg) => csv_err(0, msg),
        other => other,
    })
}

fn csv_err(line: u64, msg: String) -> Error {
    Error::Csv { line, msg }
}

/// `estimator,alpha,beta,sigma,objective,converged` rows.
pub fn write_fit_csv<W: Write>(mut w: W, rows: &[(String, FitResult)]) -> Result<()> {
    writeln!(w, "estimator,alpha,beta,sigma,objective,converged")?;
    for (label, fit) in rows {
        writeln!(
            w,
            "{label},{},{},{},{},{}",
            fit.params.alpha, fit.params.beta, fit.params.sigma, fit.objective, fit.converged
        )?;
    }
    Ok(())
}

/// `m,sigma_tilde,alpha_limit,beta_limit,score_norm`, row-major over the
/// grid; failed cells carry NaN.
pub fn write_surface_csv<W: Write>(mut w: W, surface: &LimitSurface) -> Result<()> {
    writeln!(w, "m,sigma_tilde,alpha_limit,beta_limit,score_norm")?;
    for (i, &m) in surface.m_values().iter().enumerate() {
        for (j, &st) in surface.sigma_tilde_values().iter().enumerate() {
            let (alpha, beta) = surface
                .limit(i, j)
                .map_or((f64::NAN, f64::NAN), |p| (p.alpha, p.beta));
            writeln!(w, "{m},{st},{alpha},{beta},{}", surface.residual(i, j))?;
        }
    }
    Ok(())
}

/// `m,median_gap,p90_gap,n_rep,seed` rows.
pub fn write_lemma1_csv<W: Write>(mut w: W, rows: &[GapRow]) -> Result<()> {
    writeln!(w, "m,median_gap,p90_gap,n_rep,seed")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.m, r.median_gap, r.p90_gap, r.n_rep, r.seed
        )?;
    }
    Ok(())
}

/// `m,median_abs_err,p90_abs_err,n_rep,seed` rows.
pub fn write_laplace_err_csv<W: Write>(mut w: W, rows: &[LaplaceErrRow]) -> Result<()> {
    writeln!(w, "m,median_abs_err,p90_abs_err,n_rep,seed")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.m, r.median_abs_err, r.p90_abs_err, r.n_rep, r.seed
        )?;
    }
    Ok(())
}

/// One row per estimator with replicate summaries and reference limits.
pub fn write_sim_csv<W: Write>(mut w: W, report: &SimReport) -> Result<()> {
    writeln!(
        w,
        "estimator,n,m,replicates,n_converged,alpha_mean,alpha_sd,alpha_se,beta_mean,beta_sd,beta_se,sigma_mean,sigma_sd,sigma_se,alpha_limit,beta_limit"
    )?;
    let cfg = &report.config;
    for s in &report.summaries {
        let n_conv = s.converged.iter().filter(|&&c| c).count();
        let (la, lb) = s
            .limit
            .map_or((String::new(), String::new()), |(a, b)| {
                (a.to_string(), b.to_string())
            });
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.estimator.label(),
            cfg.n,
            cfg.m,
            cfg.replicates,
            n_conv,
            s.mean[0],
            s.sd[0],
            s.se[0],
            s.mean[1],
            s.sd[1],
            s.se[1],
            s.mean[2],
            s.sd[2],
            s.se[2],
            la,
            lb
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Params;

    #[test]
    fn round_trips_a_small_dataset() {
        let csv = "item,x,y\n1,0,1\n1,0,0\n2,1,1\n2,1,1\n";
        let data = read_dataset_csv(csv.as_bytes()).unwrap();
        assert_eq!(data.n(), 2);
        assert_eq!(data.m(), 2);
        assert_eq!(data.clusters()[0].successes(), 1);
        assert_eq!(data.clusters()[1].x(), 1.0);
    }

    #[test]
    fn rejects_bad_header() {
        let e = read_dataset_csv("id,x,y\n1,0,1\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Csv { line: 1, .. }));
    }

    #[test]
    fn reports_line_of_bad_value() {
        let e = read_dataset_csv("item,x,y\n1,0,1\n1,0,2\n".as_bytes()).unwrap_err();
        match e {
            Error::Csv { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("y must be 0 or 1"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_non_contiguous_items() {
        let e = read_dataset_csv("item,x,y\n1,0,1\n2,1,0\n1,0,1\n".as_bytes()).unwrap_err();
        match e {
            Error::Csv { line, msg } => {
                assert_eq!(line, 4);
                assert!(msg.contains("contiguous"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_unequal_cluster_sizes() {
        let e = read_dataset_csv("item,x,y\n1,0,1\n1,0,0\n2,1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Csv { .. }));
    }

    #[test]
    fn fit_rows_format() {
        let fit = FitResult {
            params: Params::fixed(0.5, 1.0, 0.5),
            objective: -12.25,
            converged: true,
            iterations: 9,
            multimodal: false,
        };
        let mut buf = Vec::new();
        write_fit_csv(&mut buf, &[("full".to_string(), fit)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "estimator,alpha,beta,sigma,objective,converged\nfull,0.5,1,0.5,-12.25,true\n"
        );
    }
}
