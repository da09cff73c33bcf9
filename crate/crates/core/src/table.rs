//! Spectral CSV files: `wavelength_nm,v1[,v2,...]`, one ascending row per
//! wavelength. Used for reflectance sets, colour-matching functions, camera
//! sensitivities and illuminants.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectrum::{resample_spectrum, Spectrum, WavelengthGrid};

/// A parsed spectral CSV: shared wavelength column plus named value columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTable {
    pub wavelengths: Vec<f64>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl SpectralTable {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            None => {
                return Ok(Self {
                    wavelengths: vec![],
                    names: vec![],
                    columns: vec![],
                })
            }
            Some(h) => h.map_err(|e| Error::Parse {
                row: 0,
                msg: e.to_string(),
            })?,
        };
        if header.len() < 2 {
            return Err(Error::Parse {
                row: 0,
                msg: "header needs a wavelength column and at least one value column".into(),
            });
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut wavelengths = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        for (i, rec) in records.enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::Parse {
                row,
                msg: e.to_string(),
            })?;
            if rec.iter().all(str::is_empty) {
                continue;
            }
            if rec.len() != names.len() + 1 {
                return Err(Error::Parse {
                    row,
                    msg: format!("expected {} fields, found {}", names.len() + 1, rec.len()),
                });
            }
            let mut fields = rec.iter().map(|f| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    row,
                    msg: format!("{f:?}: {e}"),
                })
            });
            let wl = fields.next().expect("checked length")?;
            if let Some(prev) = wavelengths.last() {
                if wl <= *prev {
                    return Err(Error::Parse {
                        row,
                        msg: format!("wavelength {wl} is not ascending"),
                    });
                }
            }
            wavelengths.push(wl);
            for (col, v) in columns.iter_mut().zip(fields) {
                col.push(v?);
            }
        }
        Ok(Self {
            wavelengths,
            names,
            columns,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(f))
    }

    pub fn from_spectra(names: Vec<String>, spectra: &[&Spectrum]) -> Result<Self> {
        let grid = match spectra.first() {
            Some(s) => *s.grid(),
            None => {
                return Ok(Self {
                    wavelengths: vec![],
                    names,
                    columns: vec![],
                })
            }
        };
        if names.len() != spectra.len() {
            return Err(Error::Shape("one name per spectrum required".into()));
        }
        for s in spectra {
            if *s.grid() != grid {
                return Err(Error::Shape("spectra on different grids".into()));
            }
        }
        Ok(Self {
            wavelengths: grid.wavelengths().collect(),
            names,
            columns: spectra.iter().map(|s| s.values().to_vec()).collect(),
        })
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["wavelength_nm".to_owned()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(csv_io)?;
        for (i, wl) in self.wavelengths.iter().enumerate() {
            let mut row = vec![format_number(*wl)];
            row.extend(self.columns.iter().map(|c| format_number(c[i])));
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn raw_column(&self, index: usize) -> Vec<(f64, f64)> {
        self.wavelengths
            .iter()
            .copied()
            .zip(self.columns[index].iter().copied())
            .collect()
    }

    pub fn resample_column(&self, index: usize, grid: &WavelengthGrid) -> Result<Spectrum> {
        resample_spectrum(&self.raw_column(index), grid)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Shortest decimal representation that round-trips the value.
pub(crate) fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
