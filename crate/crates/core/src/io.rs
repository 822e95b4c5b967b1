//! Two-column CSV input and output.
//!
//! All numeric output uses the shortest round-trip decimal form, so files
//! are byte-deterministic and reload to bit-identical values. Lines starting
//! with `#` are comments; time-series files carry their sampling rate, seed,
//! and injected-tone declarations in comments so a spectrum computed from a
//! reloaded file can mask tones without re-supplying them.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::dsp::{TimeSeries, Tone};
use crate::error::{ensure_domain, Error, Result};

fn open_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::domain(format!("file not found: {}", path.display()))
        } else {
            Error::Io(e)
        }
    })
}

/// Writes paired columns under a `name,name` header.
pub fn write_pairs(
    path: impl AsRef<Path>,
    header: (&str, &str),
    x: &[f64],
    y: &[f64],
) -> Result<()> {
    ensure_domain!(
        x.len() == y.len(),
        "column lengths differ: {} vs {}",
        x.len(),
        y.len()
    );
    let mut text = String::new();
    let _ = writeln!(text, "{},{}", header.0, header.1);
    for (a, b) in x.iter().zip(y) {
        let _ = writeln!(text, "{a},{b}");
    }
    write_atomic(path.as_ref(), &text)
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Reads a two-column CSV: comments and one optional non-numeric header line
/// are skipped, every other line must be `number,number`.
pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let text = open_text(path.as_ref())?;
    let mut rows = Vec::new();
    let mut header_allowed = true;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed = line
            .split_once(',')
            .map(|(a, b)| (a.trim().parse::<f64>(), b.trim().parse::<f64>()));
        match parsed {
            Some((Ok(a), Ok(b))) => {
                rows.push((a, b));
                header_allowed = false;
            }
            _ if header_allowed => header_allowed = false,
            _ => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected 'number,number', got {line:?}"),
                })
            }
        }
    }
    Ok(rows)
}

/// CSV text of a time series: `time_s,field_T` rows with the sampling rate,
/// seed, and tone declarations riding along as comments so the record is
/// self-describing.
pub fn timeseries_text(ts: &TimeSeries) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "# fs = {}", ts.fs());
    if let Some(seed) = ts.seed() {
        let _ = writeln!(text, "# seed = {seed}");
    }
    for t in ts.tones() {
        let _ = writeln!(text, "# tone = {} {} {}", t.frequency, t.amplitude, t.phase);
    }
    let _ = writeln!(text, "time_s,field_T");
    for (i, v) in ts.samples().iter().enumerate() {
        let _ = writeln!(text, "{},{v}", i as f64 / ts.fs());
    }
    text
}

/// Writes [`timeseries_text`] to a file.
pub fn write_timeseries(path: impl AsRef<Path>, ts: &TimeSeries) -> Result<()> {
    write_atomic(path.as_ref(), &timeseries_text(ts))
}

/// Reads a time series written by [`write_timeseries`] or any uniform
/// two-column (t, value) CSV. The sampling rate comes from the `# fs`
/// comment when present, otherwise from the mean time step; tone comments
/// are restored as declared tones.
pub fn read_timeseries(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = open_text(path)?;
    let mut fs_comment = None;
    let mut tones = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let Some(comment) = line.strip_prefix('#') else {
            continue;
        };
        let Some((key, value)) = comment.split_once('=') else {
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let bad = |message: String| Error::Parse {
            line: idx + 1,
            message,
        };
        match key {
            "fs" => {
                fs_comment = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| bad(format!("fs comment is not a number: {value:?}")))?,
                )
            }
            "tone" => {
                let fields: Vec<&str> = value.split_whitespace().collect();
                ensure_domain!(
                    fields.len() == 2 || fields.len() == 3,
                    "tone comment wants 'freq amplitude [phase]', got {value:?}"
                );
                let nums: Vec<f64> = fields
                    .iter()
                    .map(|f| {
                        f.parse::<f64>()
                            .map_err(|_| bad(format!("tone field is not a number: {f:?}")))
                    })
                    .collect::<Result<_>>()?;
                tones.push(Tone {
                    frequency: nums[0],
                    amplitude: nums[1],
                    phase: nums.get(2).copied().unwrap_or(0.0),
                });
            }
            _ => {}
        }
    }

    let rows = read_pairs(path)?;
    ensure_domain!(
        rows.len() >= 2,
        "time series needs at least 2 samples, got {}",
        rows.len()
    );
    let t0 = rows[0].0;
    let t_last = rows[rows.len() - 1].0;
    let dt = (t_last - t0) / (rows.len() - 1) as f64;
    ensure_domain!(dt > 0.0, "time column must be increasing");
    let tol = (1e-6 * dt).max(8.0 * f64::EPSILON * t_last.abs());
    for (i, (t, _)) in rows.iter().enumerate() {
        ensure_domain!(
            (t - (t0 + i as f64 * dt)).abs() <= tol,
            "time column is not uniformly sampled near row {} (t = {t})",
            i + 1
        );
    }
    let fs = fs_comment.unwrap_or(1.0 / dt);
    let samples: Vec<f64> = rows.iter().map(|&(_, v)| v).collect();
    Ok(TimeSeries::new(samples, fs)?.with_declared_tones(tones))
}

/// CSV text of a spectrum: `frequency_Hz,asd_T_per_sqrtHz` rows with the
/// window metadata in comments.
pub fn spectrum_text(sp: &crate::dsp::Spectrum) -> String {
    let mut text = String::new();
    let m = &sp.meta;
    let _ = writeln!(
        text,
        "# window = {} len = {} overlap = {} segments = {}",
        m.name, m.len, m.overlap, m.segments
    );
    let _ = writeln!(text, "frequency_Hz,asd_T_per_sqrtHz");
    for (f, a) in sp.frequency.iter().zip(&sp.asd) {
        let _ = writeln!(text, "{f},{a}");
    }
    text
}

/// Writes [`spectrum_text`] to a file.
pub fn write_spectrum(path: impl AsRef<Path>, sp: &crate::dsp::Spectrum) -> Result<()> {
    write_atomic(path.as_ref(), &spectrum_text(sp))
}

/// Reads (h, B) transfer-curve anchors from CSV, in meters and tesla.
pub fn read_transfer_anchors(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let rows = read_pairs(path)?;
    ensure_domain!(
        rows.len() >= 2,
        "transfer curve needs at least 2 anchors, got {}",
        rows.len()
    );
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{synthesize_timeseries, SynthesisConfig};

    fn dir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn timeseries_round_trips_bit_exactly() {
        let cfg = SynthesisConfig {
            target_floor: 32e-12,
            fs: 1.15,
            duration: 40.0,
            tones: vec![Tone::new(0.1, 12e-9)],
            seed: 4,
            drift: None,
        };
        let ts = synthesize_timeseries(&cfg).unwrap();
        let d = dir();
        let path = d.path().join("ts.csv");
        write_timeseries(&path, &ts).unwrap();
        let back = read_timeseries(&path).unwrap();
        assert_eq!(back.samples(), ts.samples());
        assert_eq!(back.fs(), ts.fs());
        assert_eq!(back.tones(), ts.tones());
    }

    #[test]
    fn written_files_are_byte_deterministic() {
        let cfg = SynthesisConfig {
            target_floor: 1e-12,
            fs: 2.0,
            duration: 10.0,
            tones: vec![],
            seed: 9,
            drift: None,
        };
        let ts = synthesize_timeseries(&cfg).unwrap();
        let d = dir();
        let (p1, p2) = (d.path().join("a.csv"), d.path().join("b.csv"));
        write_timeseries(&p1, &ts).unwrap();
        write_timeseries(&p2, &ts).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "same series must serialize to identical bytes"
        );
    }

    #[test]
    fn plain_two_column_csv_loads_without_metadata() {
        let d = dir();
        let path = d.path().join("plain.csv");
        std::fs::write(&path, "t,v\n0,1e-12\n0.5,2e-12\n1,3e-12\n1.5,-1e-12\n").unwrap();
        let ts = read_timeseries(&path).unwrap();
        assert_eq!(ts.fs(), 2.0);
        assert_eq!(ts.samples(), &[1e-12, 2e-12, 3e-12, -1e-12]);
        assert!(ts.tones().is_empty());
        assert_eq!(ts.seed(), None);
    }

    #[test]
    fn nonuniform_times_are_rejected() {
        let d = dir();
        let path = d.path().join("bad.csv");
        std::fs::write(&path, "t,v\n0,1\n1,1\n2.5,1\n3,1\n").unwrap();
        assert!(read_timeseries(&path).is_err());
    }

    #[test]
    fn bad_rows_carry_line_numbers() {
        let d = dir();
        let path = d.path().join("bad.csv");
        std::fs::write(&path, "t,v\n0,1\nnot a row\n").unwrap();
        match read_pairs(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_timeseries("/nonexistent/in.csv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("file not found"), "got: {msg}");
        assert!(msg.contains("in.csv"), "got: {msg}");
    }

    #[test]
    fn spectrum_export_has_one_row_per_bin() {
        let cfg = SynthesisConfig {
            target_floor: 32e-12,
            fs: 1.15,
            duration: 600.0,
            tones: vec![],
            seed: 1,
            drift: None,
        };
        let ts = synthesize_timeseries(&cfg).unwrap();
        let sp = crate::dsp::welch_asd(
            &ts,
            &crate::dsp::WelchConfig {
                window_len: 256,
                overlap: 0.5,
            },
        )
        .unwrap();
        let d = dir();
        let path = d.path().join("sp.csv");
        write_spectrum(&path, &sp).unwrap();
        let rows = read_pairs(&path).unwrap();
        assert_eq!(rows.len(), sp.frequency.len());
        assert_eq!(rows[0].0, 0.0);
        let (f, a) = rows[40];
        assert_eq!(f, sp.frequency[40]);
        assert_eq!(a, sp.asd[40]);
    }
}
