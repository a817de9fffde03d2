use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;

use super::verify::TrialRecord;
use crate::error::{Error, Result};

/// Schema tag written as the first line of every per-trial CSV.
pub const SCHEMA: &str = "dpgcn-v1";

pub fn write_trial_csv(path: impl AsRef<Path>, records: &[TrialRecord]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "# schema={SCHEMA}")?;
    let mut writer = csv::Writer::from_writer(file);
    for record in records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trial_csv(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != format!("# schema={SCHEMA}") {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("expected schema tag {SCHEMA}, found {:?}", first.trim_end()),
        });
    }
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn trial_csv_round_trips(rows in proptest::collection::vec(
            (0usize..1000, 0usize..500, 0.0f64..50.0, proptest::option::of(0usize..100), proptest::option::of(-1e3f64..1e3)),
            1..20,
        )) {
            let records: Vec<TrialRecord> = rows.into_iter().map(|(trial, kept, norm, ham, f)| TrialRecord {
                trial,
                edges_kept: kept,
                delta_norm: norm,
                delta_bound: norm * 2.0,
                hamming: ham,
                flip_bound: f,
                rate: ham.map(|h| h as f64 / 100.0),
                f_bound: f,
            }).collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.csv");
            write_trial_csv(&path, &records).unwrap();
            prop_assert_eq!(read_trial_csv(&path).unwrap(), records);
        }
    }

    #[test]
    fn missing_schema_tag_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(&path, "trial,edges_kept\n").unwrap();
        assert!(matches!(read_trial_csv(&path), Err(Error::Parse { line: 1, .. })));
    }
}
