use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{wrap_direction, DataError, MetRecord};
use crate::artifact::{fmt_f64, write_atomic};

/// Maps each record field to the CSV header that holds it.
///
/// The defaults are the canonical column names written by
/// [`write_records_csv`] and the `synth` generator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub month: String,
    pub day: String,
    pub hour: String,
    pub minute: String,
    pub wind_speed: String,
    pub air_temperature: String,
    pub air_pressure: String,
    pub wind_direction: String,
    pub density: String,
    pub power: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            month: "month".into(),
            day: "day".into(),
            hour: "hour".into(),
            minute: "minute".into(),
            wind_speed: "wind_speed".into(),
            air_temperature: "air_temperature".into(),
            air_pressure: "air_pressure".into(),
            wind_direction: "wind_direction".into(),
            density: "density".into(),
            power: "power".into(),
        }
    }
}

impl Schema {
    fn columns(&self) -> [&str; 10] {
        [
            &self.month,
            &self.day,
            &self.hour,
            &self.minute,
            &self.wind_speed,
            &self.air_temperature,
            &self.air_pressure,
            &self.wind_direction,
            &self.density,
            &self.power,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestMode {
    /// First bad row aborts with [`DataError::Parse`].
    #[default]
    Strict,
    /// Bad rows are skipped and reported in [`Ingested::skipped`].
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRow {
    pub row: usize,
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub records: Vec<MetRecord>,
    pub skipped: Vec<SkippedRow>,
}

fn parse_int(raw: &str, name: &str, max: u8) -> Result<u8, String> {
    let v: f64 = raw.parse().map_err(|_| format!("{name}: cannot parse `{raw}`"))?;
    if !v.is_finite() || v.fract() != 0.0 || v < 0.0 || v > max as f64 {
        return Err(format!("{name}: `{raw}` is not an integer in 0..={max}"));
    }
    Ok(v as u8)
}

fn parse_real(raw: &str, name: &str) -> Result<f64, String> {
    let v: f64 = raw.parse().map_err(|_| format!("{name}: cannot parse `{raw}`"))?;
    if !v.is_finite() {
        return Err(format!("{name}: non-finite value `{raw}`"));
    }
    Ok(v)
}

fn parse_row(rec: &csv::StringRecord, idx: &[usize; 10]) -> Result<MetRecord, String> {
    let get = |i: usize| rec.get(idx[i]).ok_or_else(|| "row is shorter than header".to_string());
    let r = MetRecord {
        month: parse_int(get(0)?, "month", 12)?,
        day: parse_int(get(1)?, "day", 31)?,
        hour: parse_int(get(2)?, "hour", 23)?,
        minute: parse_int(get(3)?, "minute", 59)?,
        wind_speed: parse_real(get(4)?, "wind_speed")?,
        air_temperature: parse_real(get(5)?, "air_temperature")?,
        air_pressure: parse_real(get(6)?, "air_pressure")?,
        wind_direction: wrap_direction(parse_real(get(7)?, "wind_direction")?),
        density: parse_real(get(8)?, "density")?,
        power: parse_real(get(9)?, "power")?,
    };
    r.validate()?;
    Ok(r)
}

/// Reads records in file order.
pub fn ingest_csv(path: &Path, schema: &Schema, mode: IngestMode) -> Result<Ingested, DataError> {
    let io_err = |source: io::Error| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    ingest_reader(file, schema, mode)
}

pub(crate) fn ingest_reader<R: io::Read>(reader: R, schema: &Schema, mode: IngestMode) -> Result<Ingested, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) if h.iter().any(|c| !c.is_empty()) => h.clone(),
        Ok(_) => return Err(DataError::EmptyFile),
        Err(e) => {
            return Err(DataError::Parse {
                row: 0,
                line: 1,
                msg: e.to_string(),
            })
        }
    };
    let mut idx = [0usize; 10];
    for (slot, name) in idx.iter_mut().zip(schema.columns()) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))?;
    }

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut rows = 0usize;
    for (i, result) in rdr.records().enumerate() {
        let row = i + 1;
        rows = row;
        let (line, parsed) = match result {
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line());
                (line, parse_row(&rec, &idx))
            }
            Err(e) => (e.position().map_or(0, |p| p.line()), Err(e.to_string())),
        };
        match parsed {
            Ok(r) => records.push(r),
            Err(msg) => match mode {
                IngestMode::Strict => return Err(DataError::Parse { row, line, msg }),
                IngestMode::Lenient => skipped.push(SkippedRow { row, line, reason: msg }),
            },
        }
    }
    if rows == 0 || records.is_empty() {
        return Err(DataError::EmptyFile);
    }
    Ok(Ingested { records, skipped })
}

/// Writes records with the canonical header (the [`Schema::default`] names).
pub fn write_records_csv(path: &Path, records: &[MetRecord]) -> Result<(), DataError> {
    let mut buf = Vec::with_capacity(records.len() * 96);
    write_records(&mut buf, records).expect("writing to a Vec cannot fail");
    write_atomic(path, &buf).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_records<W: Write>(mut w: W, records: &[MetRecord]) -> io::Result<()> {
    let schema = Schema::default();
    writeln!(w, "{}", schema.columns().join(","))?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.month,
            r.day,
            r.hour,
            r.minute,
            fmt_f64(r.wind_speed),
            fmt_f64(r.air_temperature),
            fmt_f64(r.air_pressure),
            fmt_f64(r.wind_direction),
            fmt_f64(r.density),
            fmt_f64(r.power),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
month,day,hour,minute,wind_speed,air_temperature,air_pressure,wind_direction,density,power
1,1,0,0,5.5,280.1,101000,270,1.25,3.2
1,1,0,10,6.0,280.0,101010,-10,1.24,4.0
1,1,0,20,2.0,279.9,101020,365,1.24,0.0
";

    fn read(text: &str, mode: IngestMode) -> Result<Ingested, DataError> {
        ingest_reader(text.as_bytes(), &Schema::default(), mode)
    }

    #[test]
    fn well_formed_rows_in_order() {
        let got = read(GOOD, IngestMode::Strict).unwrap();
        assert_eq!(got.records.len(), 3);
        assert!(got.skipped.is_empty());
        assert_eq!(got.records[0].wind_speed, 5.5);
        assert_eq!(got.records[1].minute, 10);
        assert_eq!(got.records[1].wind_direction, 350.0);
        assert_eq!(got.records[2].wind_direction, 5.0);
    }

    #[test]
    fn missing_column_is_reported() {
        let text = GOOD.replace("wind_speed", "ws");
        match read(&text, IngestMode::Strict) {
            Err(DataError::MissingColumn(c)) => assert_eq!(c, "wind_speed"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_maps_custom_headers() {
        let text = GOOD.replace("wind_speed", "wind speed at 100m (m/s)");
        let schema = Schema {
            wind_speed: "wind speed at 100m (m/s)".into(),
            ..Schema::default()
        };
        let got = ingest_reader(text.as_bytes(), &schema, IngestMode::Strict).unwrap();
        assert_eq!(got.records[1].wind_speed, 6.0);
    }

    #[test]
    fn strict_rejects_and_lenient_skips() {
        let text = format!("{GOOD}1,1,0,30,NaN,280,101000,0,1.2,1.0\n1,1,0,40,abc,280,101000,0,1.2,1.0\n1,13,0,0,4,280,101000,0,1.2,1.0\n");
        match read(&text, IngestMode::Strict) {
            Err(DataError::Parse { row, line, .. }) => {
                assert_eq!(row, 4);
                assert_eq!(line, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
        let got = read(&text, IngestMode::Lenient).unwrap();
        assert_eq!(got.records.len(), 4);
        assert_eq!(got.skipped.len(), 2);
        assert_eq!(got.skipped[0].row, 4);
    }

    #[test]
    fn short_rows_are_parse_errors() {
        let text = format!("{GOOD}1,1,0\n");
        assert!(matches!(read(&text, IngestMode::Strict), Err(DataError::Parse { row: 4, .. })));
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(read("", IngestMode::Strict), Err(DataError::EmptyFile)));
        let header_only = GOOD.lines().next().unwrap().to_string() + "\n";
        assert!(matches!(read(&header_only, IngestMode::Strict), Err(DataError::EmptyFile)));
    }

    #[test]
    fn write_then_read_is_identity() {
        let recs = read(GOOD, IngestMode::Strict).unwrap().records;
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let back = read(std::str::from_utf8(&buf).unwrap(), IngestMode::Strict).unwrap().records;
        assert_eq!(recs, back);
    }
}
