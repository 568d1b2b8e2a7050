use std::io::Write;
use std::path::Path;

use super::{Channel, ChannelUnit, SignalSet, JOINT_CHANNELS, SENSOR_CHANNELS};
use crate::error::{Error, Result};

/// Relative tolerance on the spacing of the `t_s` column.
const TIME_STEP_TOLERANCE: f64 = 1e-6;

/// Column layout of a signal file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvSchema {
    /// `t_s,X_mm,Y_mm,Z_mm,A_deg,C_deg`
    Joints,
    /// `t_s,s1_um,s2_um,s3_um` or `t_s,s1_V,s2_V,s3_V`
    Sensor,
}

impl CsvSchema {
    /// Candidate column sets, each a list of `(channel, unit)`.
    fn layouts(self) -> Vec<Vec<(&'static str, ChannelUnit)>> {
        match self {
            CsvSchema::Joints => vec![JOINT_CHANNELS
                .iter()
                .enumerate()
                .map(|(i, name)| {
                    let unit = if i < 3 { ChannelUnit::Millimetre } else { ChannelUnit::Radian };
                    (*name, unit)
                })
                .collect()],
            CsvSchema::Sensor => [ChannelUnit::Micrometre, ChannelUnit::Volt]
                .into_iter()
                .map(|unit| SENSOR_CHANNELS.iter().map(|name| (*name, unit)).collect())
                .collect(),
        }
    }
}

fn column_name(name: &str, unit: ChannelUnit) -> String {
    format!("{name}_{}", unit.file_suffix())
}

/// Reads a signal file, converting angular columns from degrees to radians.
/// The sample rate is inferred from the `t_s` column, which must be uniform.
pub fn load_signals(path: impl AsRef<Path>, schema: CsvSchema) -> Result<SignalSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(std::io::BufReader::new(file));
    let headers = reader.headers()?.clone();
    let find = |col: &str| headers.iter().position(|h| h == col);

    let time_idx = find("t_s").ok_or_else(|| Error::MissingColumn {
        path: path.to_path_buf(),
        column: "t_s".into(),
    })?;
    let layouts = schema.layouts();
    let layout = layouts
        .iter()
        .find(|layout| find(&column_name(layout[0].0, layout[0].1)).is_some())
        .unwrap_or(&layouts[0]);
    let mut columns = Vec::with_capacity(layout.len());
    for &(name, unit) in layout {
        let col = column_name(name, unit);
        let idx = find(&col).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: col.clone(),
        })?;
        columns.push((name, unit, col, idx));
    }

    let mut times = Vec::new();
    let mut data: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    for (i, record) in reader.records().enumerate() {
        // Row numbers are 1-based data rows, excluding the header.
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let parse = |idx: usize, col: &str| -> Result<f64> {
            let field = record.get(idx).unwrap_or("");
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row,
                column: col.to_string(),
                message: format!("cannot parse `{field}` as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: col.to_string(),
                    message: format!("non-finite value `{field}`"),
                });
            }
            Ok(value)
        };
        times.push(parse(time_idx, "t_s")?);
        for ((_, unit, col, idx), out) in columns.iter().zip(data.iter_mut()) {
            let v = parse(*idx, col)?;
            out.push(if *unit == ChannelUnit::Radian { v.to_radians() } else { v });
        }
    }

    let sample_rate = infer_rate(path, &times)?;
    let channels = columns
        .into_iter()
        .zip(data)
        .map(|((name, unit, _, _), d)| Channel::new(name, unit, d))
        .collect();
    SignalSet::new(sample_rate, times[0], channels)
}

fn infer_rate(path: &Path, times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::invalid(format!(
            "{}: at least two samples are needed to infer the sample rate",
            path.display()
        )));
    }
    let n = times.len();
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("{}: time column is not increasing", path.display())));
    }
    let first = times[1] - times[0];
    for (k, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - first).abs() > TIME_STEP_TOLERANCE * dt {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: k + 2,
                column: "t_s".into(),
                message: format!("non-uniform sampling: step {} after a first step of {first}", w[1] - w[0]),
            });
        }
    }
    // Snap to a picosecond grid so that rates written as `1/dt` reload exactly.
    let snapped = (dt * 1e12).round() / 1e12;
    let dt = if snapped > 0.0 && (snapped - dt).abs() <= TIME_STEP_TOLERANCE * dt { snapped } else { dt };
    Ok(1.0 / dt)
}

/// Writes a signal set with 17 significant digits so that a reload is
/// bit-exact for linear and sensor channels. Angular channels are written
/// in degrees.
pub fn write_signals(path: impl AsRef<Path>, set: &SignalSet) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);

    let mut header = String::from("t_s");
    for ch in set.channels() {
        header.push(',');
        header.push_str(&column_name(&ch.name, ch.unit));
    }
    writeln!(out, "{header}").map_err(io)?;

    let mut line = String::new();
    for k in 0..set.len() {
        line.clear();
        push_value(&mut line, set.time(k));
        for ch in set.channels() {
            line.push(',');
            let v = ch.data[k];
            push_value(&mut line, if ch.unit == ChannelUnit::Radian { v.to_degrees() } else { v });
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

fn push_value(buf: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(buf, "{v:.16e}");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_format_round_trips() {
        for v in [0.0, -0.0, 1.0 / 3.0, 1e-300, -123456.789e10, f64::MIN_POSITIVE, 0.1 + 0.2] {
            let mut s = String::new();
            push_value(&mut s, v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn sensor_schema_accepts_volts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "t_s,s1_V,s2_V,s3_V\n0,1,2,3\n0.5,4,5,6\n").unwrap();
        let set = load_signals(&path, CsvSchema::Sensor).unwrap();
        assert_eq!(set.sample_rate(), 2.0);
        assert_eq!(set.channel("s2").unwrap().unit, ChannelUnit::Volt);
        assert_eq!(set.channel("s3").unwrap().data, vec![3.0, 6.0]);
    }

    #[test]
    fn non_uniform_time_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "t_s,s1_um,s2_um,s3_um\n0,0,0,0\n1,0,0,0\n3,0,0,0\n").unwrap();
        let err = load_signals(&path, CsvSchema::Sensor).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }), "{err}");
    }

    #[test]
    fn missing_column_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.csv");
        std::fs::write(&path, "t_s,X_mm,Y_mm,Z_mm,A_deg\n0,0,0,0,0\n").unwrap();
        match load_signals(&path, CsvSchema::Joints).unwrap_err() {
            Error::MissingColumn { column, .. } => assert_eq!(column, "C_deg"),
            e => panic!("unexpected {e}"),
        }
    }
}
