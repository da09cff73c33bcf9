//! Collation of run artifacts into a markdown report with plot data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::args::ReportArgs;
use crate::error::CliResult;

const ARTIFACTS: [&str; 4] = ["summary.csv", "angle_table.csv", "log.csv", "spectra.csv"];
const OVERLAYS: usize = 4;

fn find_files(dir: &Path, skip: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p == skip {
            continue;
        }
        if e.file_type()?.is_dir() {
            find_files(&p, skip, out)?;
        } else if p.file_name().and_then(|n| n.to_str()).is_some_and(|n| ARTIFACTS.contains(&n)) {
            out.push(p);
        }
    }
    Ok(())
}

fn csv_rows(path: &Path) -> CliResult<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| interspec::Error::Io { path: Some(path.into()), source: e })?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|c| c.trim().to_string()).collect())
        .collect())
}

fn markdown_table(rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    let Some((head, body)) = rows.split_first() else {
        return s;
    };
    let _ = writeln!(s, "| {} |", head.join(" | "));
    let _ = writeln!(s, "|{}", "---|".repeat(head.len()));
    for r in body {
        let _ = writeln!(s, "| {} |", r.join(" | "));
    }
    s
}

fn label(run_dir: &Path, path: &Path) -> String {
    let rel = path.parent().and_then(|p| p.strip_prefix(run_dir).ok()).map(|p| p.display().to_string());
    match rel.as_deref() {
        None | Some("") => ".".into(),
        Some(r) => r.into(),
    }
}

/// Writes `.dat` files for the first samples of a spectra CSV plus a gnuplot script.
fn spectra_overlays(path: &Path, out: &Path, tag: &str) -> CliResult<Vec<PathBuf>> {
    let rows = csv_rows(path)?;
    let Some((head, body)) = rows.split_first() else {
        return Ok(Vec::new());
    };
    let col = |name: &str| head.iter().position(|h| h == name);
    let (Some(ci), Some(cw), Some(crt), Some(cre)) =
        (col("index"), col("wavelength_nm"), col("reflectance_true"), col("reflectance_est"))
    else {
        return Ok(Vec::new());
    };
    let (cst, cse) = (col("spd_true"), col("spd_est"));
    let mut by_sample: BTreeMap<usize, Vec<&Vec<String>>> = BTreeMap::new();
    for r in body {
        if let Some(i) = r.get(ci).and_then(|v| v.parse().ok()) {
            if by_sample.len() < OVERLAYS || by_sample.contains_key(&i) {
                by_sample.entry(i).or_default().push(r);
            }
        }
    }
    let mut written = Vec::new();
    let mut gp = String::from("set terminal pngcairo size 900,600\nset xlabel 'wavelength (nm)'\n");
    for (i, rs) in &by_sample {
        let dat = out.join(format!("{tag}_sample{i}.dat"));
        let mut s = String::from("# wavelength r_true r_est spd_true spd_est\n");
        for r in rs {
            let get = |c: Option<usize>| c.and_then(|c| r.get(c)).filter(|v| !v.is_empty()).map_or("NaN", |v| v);
            let _ = writeln!(s, "{} {} {} {} {}", r[cw], r[crt], r[cre], get(cst), get(cse));
        }
        fs::write(&dat, s)?;
        let name = dat.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let png = name.replace(".dat", ".png");
        let _ = writeln!(
            gp,
            "set output '{png}'\nplot '{name}' u 1:2 w l t 'reflectance', '' u 1:3 w l dt 2 t 'estimate', \
             '' u 1:4 w l t 'illuminant', '' u 1:5 w l dt 2 t 'illuminant estimate'"
        );
        written.push(dat);
    }
    if !written.is_empty() {
        let script = out.join(format!("{tag}_spectra.gp"));
        fs::write(&script, gp)?;
        written.push(script);
    }
    Ok(written)
}

pub fn cmd_report(a: &ReportArgs) -> CliResult<()> {
    let out = a.out.clone().unwrap_or_else(|| a.run_dir.join("report"));
    if !a.run_dir.is_dir() {
        return Err(crate::error::CliError::Config(format!("{} is not a directory", a.run_dir.display())));
    }
    fs::create_dir_all(&out)?;
    let mut files = Vec::new();
    find_files(&a.run_dir, &out, &mut files)?;

    let mut md = format!("# Run report: {}\n\n", a.run_dir.display());
    let mut missing: Vec<&str> = ARTIFACTS.iter().copied().filter(|n| !files.iter().any(|f| f.ends_with(n))).collect();
    if files.is_empty() {
        log::warn!("no run artifacts found under {}", a.run_dir.display());
        md.push_str("No run artifacts were found.\n\n");
    }
    for (n, f) in files.iter().enumerate() {
        let name = f.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let where_ = label(&a.run_dir, f);
        match name.as_str() {
            "summary.csv" | "angle_table.csv" => {
                let rows = csv_rows(f)?;
                let _ = write!(md, "## {name} ({where_})\n\n{}\n", markdown_table(&rows));
                fs::copy(f, out.join(format!("{n:02}_{name}")))?;
            }
            "log.csv" => {
                let rows = csv_rows(f)?;
                let keep: Vec<Vec<String>> = rows.iter().take(1).chain(rows.iter().skip(1).last()).cloned().collect();
                let _ = write!(md, "## training log ({where_}), last epoch\n\n{}\n", markdown_table(&keep));
                let dat = out.join(format!("{n:02}_loss.dat"));
                let body: String = rows
                    .iter()
                    .skip(1)
                    .map(|r| format!("{}\n", r.iter().take(6).cloned().collect::<Vec<_>>().join(" ")))
                    .collect();
                fs::write(&dat, format!("# epoch lr loss_r loss_e loss_s loss_total\n{body}"))?;
            }
            "spectra.csv" => {
                let written = spectra_overlays(f, &out, &format!("{n:02}"))?;
                let _ = writeln!(md, "## spectra ({where_})\n");
                for w in written {
                    let _ = writeln!(md, "- `{}`", w.file_name().unwrap_or_default().to_string_lossy());
                }
                md.push('\n');
            }
            _ => {}
        }
    }
    if !missing.is_empty() {
        missing.sort_unstable();
        let _ = writeln!(md, "## missing artifacts\n");
        for m in &missing {
            let _ = writeln!(md, "- {m}");
        }
    }
    fs::write(out.join("report.md"), &md)?;
    println!("{}", out.join("report.md").display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_separator_row() {
        let rows = vec![vec!["a".to_string(), "b".into()], vec!["1".into(), "2".into()]];
        assert_eq!(markdown_table(&rows), "| a | b |\n|---|---|\n| 1 | 2 |\n");
        assert!(markdown_table(&[]).is_empty());
    }
}
