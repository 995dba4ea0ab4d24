//! Long-format CSV interchange: one panel row per individual-period
//! (exposures are recorded for every period, covariates only while under
//! follow-up), and a separate events file. All reals are serialized with 17
//! significant digits so rewriting a parsed file is byte-identical.

use crate::error::{Error, Result};
use crate::panel::{Individual, Panel};
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

/// 17 significant digits: round-trips every finite f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a panel to `panel_path` and its event times to `events_path`.
pub fn write_panel(panel: &Panel, panel_path: &Path, events_path: &Path) -> Result<()> {
    let mut pw = std::io::BufWriter::new(std::fs::File::create(panel_path)?);
    let mut header = String::from("id,k,A");
    for j in 1..=panel.cov_width {
        header.push_str(&format!(",L{j}"));
    }
    header.push_str(",x_time,death_observed");
    writeln!(pw, "{header}")?;

    let m = panel.baseline_len as i64;
    for ind in &panel.individuals {
        for k in -m..=panel.horizon as i64 {
            let a = ind.exposure(k).ok_or_else(|| {
                Error::DimensionMismatch(format!("individual {} misses exposure {k}", ind.id))
            })?;
            let mut row = format!("{},{},{}", ind.id, k, fmt_f64(a));
            match ind.covariates_at(k) {
                Some(cov) => {
                    for &v in cov {
                        row.push(',');
                        row.push_str(&fmt_f64(v));
                    }
                }
                None => {
                    for _ in 0..panel.cov_width {
                        row.push(',');
                    }
                }
            }
            row.push_str(&format!(
                ",{},{}",
                fmt_f64(ind.x_time),
                u8::from(ind.death_observed)
            ));
            writeln!(pw, "{row}")?;
        }
    }
    pw.flush()?;

    let mut ew = std::io::BufWriter::new(std::fs::File::create(events_path)?);
    writeln!(ew, "id,t")?;
    for ind in &panel.individuals {
        for &t in ind.event_times() {
            writeln!(ew, "{},{}", ind.id, fmt_f64(t))?;
        }
    }
    ew.flush()?;
    Ok(())
}

struct RawIndividual {
    id: u64,
    rows: Vec<(i64, f64, Option<Vec<f64>>)>, // (k, exposure, covariates)
    x_time: f64,
    death_observed: bool,
}

/// Surface missing/unreadable files as I/O errors rather than CSV errors.
fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    Ok(csv::ReaderBuilder::new().flexible(false).from_reader(file))
}

/// Read a panel and its events back. Only structural parsing happens here;
/// semantic checks are [`Panel::validate`]'s job.
pub fn read_panel(panel_path: &Path, events_path: &Path) -> Result<Panel> {
    let file_name = panel_path.display().to_string();
    let mut reader = open_csv(panel_path)?;
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 5 || cols[0] != "id" || cols[1] != "k" || cols[2] != "A" {
        return Err(Error::Parse {
            file: file_name,
            line: 1,
            msg: "expected header id,k,A,L1..Lp,x_time,death_observed".into(),
        });
    }
    let p = cols.len() - 5;
    for (j, name) in cols[3..3 + p].iter().enumerate() {
        if *name != format!("L{}", j + 1) {
            return Err(Error::Parse {
                file: file_name,
                line: 1,
                msg: format!("covariate column {} named {name}", j + 1),
            });
        }
    }

    let mut order: Vec<u64> = Vec::new();
    let mut by_id: HashMap<u64, RawIndividual> = HashMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record?;
        let fail = |msg: String| Error::Parse {
            file: file_name.clone(),
            line,
            msg,
        };
        let id: u64 = record[0]
            .parse()
            .map_err(|_| fail(format!("bad id {:?}", &record[0])))?;
        let k: i64 = record[1]
            .parse()
            .map_err(|_| fail(format!("bad period {:?}", &record[1])))?;
        let a: f64 = record[2]
            .parse()
            .map_err(|_| fail(format!("bad exposure {:?}", &record[2])))?;
        let cov_cells: Vec<&str> = (0..p).map(|j| &record[3 + j]).collect();
        let covariates = if cov_cells.iter().all(|c| c.is_empty()) {
            None
        } else {
            let parsed: std::result::Result<Vec<f64>, _> =
                cov_cells.iter().map(|c| c.parse::<f64>()).collect();
            Some(parsed.map_err(|_| fail("bad covariate cell".into()))?)
        };
        let x_time: f64 = record[3 + p]
            .parse()
            .map_err(|_| fail(format!("bad x_time {:?}", &record[3 + p])))?;
        let death_observed = match &record[4 + p] {
            "0" => false,
            "1" => true,
            other => return Err(fail(format!("bad death flag {other:?}"))),
        };

        let entry = by_id.entry(id).or_insert_with(|| {
            order.push(id);
            RawIndividual {
                id,
                rows: Vec::new(),
                x_time,
                death_observed,
            }
        });
        if entry.x_time != x_time || entry.death_observed != death_observed {
            return Err(fail(format!("inconsistent follow-up fields for id {id}")));
        }
        entry.rows.push((k, a, covariates));
    }
    if order.is_empty() {
        return Err(Error::EmptyData);
    }

    let mut events: HashMap<u64, Vec<f64>> = HashMap::new();
    let events_name = events_path.display().to_string();
    let mut ereader = open_csv(events_path)?;
    {
        let eh = ereader.headers()?;
        if eh.len() != 2 || &eh[0] != "id" || &eh[1] != "t" {
            return Err(Error::Parse {
                file: events_name,
                line: 1,
                msg: "expected header id,t".into(),
            });
        }
    }
    for (idx, record) in ereader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        let fail = |msg: String| Error::Parse {
            file: events_name.clone(),
            line,
            msg,
        };
        let id: u64 = record[0]
            .parse()
            .map_err(|_| fail(format!("bad id {:?}", &record[0])))?;
        let t: f64 = record[1]
            .parse()
            .map_err(|_| fail(format!("bad event time {:?}", &record[1])))?;
        events.entry(id).or_default().push(t);
    }
    for ts in events.values_mut() {
        ts.sort_by(f64::total_cmp);
    }
    if let Some(stray) = events.keys().find(|id| !by_id.contains_key(id)) {
        return Err(Error::Parse {
            file: events_name,
            line: 0,
            msg: format!("event for unknown id {stray}"),
        });
    }

    // global period range
    let mut k_min = i64::MAX;
    let mut k_max = i64::MIN;
    for raw in by_id.values() {
        for &(k, _, _) in &raw.rows {
            k_min = k_min.min(k);
            k_max = k_max.max(k);
        }
    }
    if k_min > 0 {
        return Err(Error::Parse {
            file: file_name,
            line: 0,
            msg: "panel has no study periods (k >= 0)".into(),
        });
    }
    let baseline_len = (-k_min).max(0) as usize;
    let horizon = k_max.max(0) as usize;
    let max_x = by_id
        .values()
        .map(|r| r.x_time)
        .fold(f64::NEG_INFINITY, f64::max);
    let tau = (horizon as f64).max(max_x);

    let mut individuals = Vec::with_capacity(order.len());
    for id in order {
        let mut raw = by_id.remove(&id).unwrap();
        raw.rows.sort_by_key(|&(k, _, _)| k);
        let mut exposures = Vec::with_capacity(raw.rows.len());
        let mut covariates = Vec::new();
        let mut expect_k = k_min;
        for (k, a, cov) in &raw.rows {
            if *k != expect_k {
                return Err(Error::Parse {
                    file: file_name.clone(),
                    line: 0,
                    msg: format!("id {id}: period {expect_k} missing or duplicated"),
                });
            }
            expect_k += 1;
            exposures.push(*a);
            if let Some(c) = cov {
                covariates.extend_from_slice(c);
            }
        }
        individuals.push(Individual::new(
            raw.id,
            baseline_len,
            exposures,
            covariates,
            p,
            events.remove(&id).unwrap_or_default(),
            raw.x_time,
            raw.death_observed,
        ));
    }

    Ok(Panel::new(individuals, baseline_len, tau, p))
}
