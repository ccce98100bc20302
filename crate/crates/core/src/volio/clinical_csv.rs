//! Clinical table ingestion (RFC-4180 CSV with header row).
//!
//! The fixed feature schema and its encoding codebook:
//!
//! | column | encoding |
//! |---|---|
//! | `t_involvement` | 0 = under 50% liver involvement, 1 = 50% or more (also accepts `<50%` / `>=50%`, yes/no) |
//! | `personal_history_cancer`, `lymphnodes`, `metastasis`, `cirrhosis`, `alcohol`, `smoking`, `diabetes`, `family_history_cancer` | binary: `yes`/`no`, `y`/`n`, `true`/`false`, `1`/`0` |
//! | `clip_score` | ordinal integer 0–6 |
//! | `tnm` | stage `I, II, IIIA, IIIB, IIIC, IVA, IVB` → 1–7 (bare integers 1–7 accepted) |
//! | `afp` | real, ng/ml |
//! | `age` | real, years |
//! | `ttp` | real, weeks to first progression |
//! | `interval_bl` | real, days between diagnosis and baseline CT |
//!
//! Empty cells set the per-feature missing flag (value imputed downstream
//! at fit time). Header matching is case-insensitive and treats spaces as
//! underscores. The first column must be `patient_id`.

use std::path::Path;

use super::VolioError;

/// Fixed, ordered clinical feature schema.
pub const CLINICAL_FEATURES: [&str; 15] = [
    "t_involvement",
    "personal_history_cancer",
    "lymphnodes",
    "clip_score",
    "tnm",
    "metastasis",
    "cirrhosis",
    "alcohol",
    "afp",
    "smoking",
    "diabetes",
    "family_history_cancer",
    "age",
    "ttp",
    "interval_bl",
];

/// Number of clinical features in the schema.
pub const NUM_CLINICAL_FEATURES: usize = CLINICAL_FEATURES.len();

/// One patient's risk-factor vector plus identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalRecord {
    pub patient_id: String,
    /// Values in schema order; missing entries hold NaN and set the flag.
    pub values: [f64; NUM_CLINICAL_FEATURES],
    pub missing: [bool; NUM_CLINICAL_FEATURES],
}

impl ClinicalRecord {
    /// A record with every feature present.
    pub fn complete(patient_id: impl Into<String>, values: [f64; NUM_CLINICAL_FEATURES]) -> Self {
        ClinicalRecord {
            patient_id: patient_id.into(),
            values,
            missing: [false; NUM_CLINICAL_FEATURES],
        }
    }

    pub fn feature(&self, name: &str) -> Option<f64> {
        let idx = CLINICAL_FEATURES.iter().position(|&f| f == name)?;
        if self.missing[idx] {
            None
        } else {
            Some(self.values[idx])
        }
    }
}

fn canonical(name: &str) -> String {
    name.trim().to_ascii_lowercase().replace([' ', '-'], "_")
}

fn parse_binary(cell: &str) -> Option<f64> {
    match canonical(cell).as_str() {
        "1" | "y" | "yes" | "true" => Some(1.0),
        "0" | "n" | "no" | "false" => Some(0.0),
        _ => None,
    }
}

fn parse_cell(feature_idx: usize, cell: &str) -> Result<f64, String> {
    let name = CLINICAL_FEATURES[feature_idx];
    let trimmed = cell.trim();
    match name {
        "t_involvement" => match canonical(trimmed).as_str() {
            "<50%" | "<50" => Ok(0.0),
            ">=50%" | ">50%" | ">=50" | ">50" => Ok(1.0),
            _ => parse_binary(trimmed).ok_or_else(|| format!("'{trimmed}' is not a valid involvement code")),
        },
        "personal_history_cancer" | "lymphnodes" | "metastasis" | "cirrhosis" | "alcohol"
        | "smoking" | "diabetes" | "family_history_cancer" => {
            parse_binary(trimmed).ok_or_else(|| format!("'{trimmed}' is not a yes/no value"))
        }
        "clip_score" => {
            let v: i64 = trimmed
                .parse()
                .map_err(|_| format!("'{trimmed}' is not an integer CLIP score"))?;
            if (0..=6).contains(&v) {
                Ok(v as f64)
            } else {
                Err(format!("CLIP score {v} outside 0..=6"))
            }
        }
        "tnm" => {
            const STAGES: [&str; 7] = ["i", "ii", "iiia", "iiib", "iiic", "iva", "ivb"];
            let c = canonical(trimmed);
            if let Some(pos) = STAGES.iter().position(|&s| s == c) {
                return Ok((pos + 1) as f64);
            }
            let v: i64 = trimmed
                .parse()
                .map_err(|_| format!("'{trimmed}' is not a TNM stage"))?;
            if (1..=7).contains(&v) {
                Ok(v as f64)
            } else {
                Err(format!("TNM ordinal {v} outside 1..=7"))
            }
        }
        // afp, age, ttp, interval_bl: plain reals
        _ => {
            let v: f64 = trimmed
                .parse()
                .map_err(|_| format!("'{trimmed}' is not a number"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("'{trimmed}' is not finite"))
            }
        }
    }
}

/// Reads one [`ClinicalRecord`] per data row.
///
/// Columns beyond the schema are rejected unless `allow_extra` is set.
pub fn read_clinical_csv(
    path: impl AsRef<Path>,
    allow_extra: bool,
) -> Result<Vec<ClinicalRecord>, VolioError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || canonical(&headers[0]) != "patient_id" {
        return Err(VolioError::MissingColumn("patient_id".into()));
    }
    // Map schema slot -> CSV column index.
    let mut columns = [usize::MAX; NUM_CLINICAL_FEATURES];
    for (col, header) in headers.iter().enumerate().skip(1) {
        let name = canonical(header);
        match CLINICAL_FEATURES.iter().position(|&f| f == name) {
            Some(slot) => columns[slot] = col,
            None if allow_extra => {}
            None => return Err(VolioError::UnknownColumn(header.to_string())),
        }
    }
    for (slot, &col) in columns.iter().enumerate() {
        if col == usize::MAX {
            return Err(VolioError::MissingColumn(CLINICAL_FEATURES[slot].into()));
        }
    }

    let mut records = Vec::new();
    for (row_idx, row) in reader.records().enumerate() {
        let row = row?;
        let patient_id = row.get(0).unwrap_or("").to_string();
        let mut values = [f64::NAN; NUM_CLINICAL_FEATURES];
        let mut missing = [false; NUM_CLINICAL_FEATURES];
        for slot in 0..NUM_CLINICAL_FEATURES {
            let cell = row.get(columns[slot]).unwrap_or("");
            if cell.trim().is_empty() {
                missing[slot] = true;
                continue;
            }
            values[slot] = parse_cell(slot, cell).map_err(|detail| VolioError::UnparsableCell {
                row: row_idx,
                column: CLINICAL_FEATURES[slot].into(),
                detail,
            })?;
        }
        records.push(ClinicalRecord {
            patient_id,
            values,
            missing,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn full_header() -> String {
        let mut h = String::from("patient_id");
        for f in CLINICAL_FEATURES {
            h.push(',');
            h.push_str(f);
        }
        h
    }

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn complete_two_row_file() {
        let body = format!(
            "{}\nP1,1,yes,no,2,IIIA,no,yes,yes,15.2,no,no,yes,63,40,12\n\
             P2,0,no,no,0,I,no,no,no,4.0,yes,no,no,55,80,30\n",
            full_header()
        );
        let file = write_csv(&body);
        let records = read_clinical_csv(file.path(), false).unwrap();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| r.missing.iter().all(|&m| !m)));
        assert_eq!(records[0].feature("tnm"), Some(3.0));
        assert_eq!(records[0].feature("afp"), Some(15.2));
    }

    #[test]
    fn empty_afp_cell_sets_missing_flag() {
        let body = format!(
            "{}\nP1,1,yes,no,2,II,no,yes,yes,,no,no,yes,63,40,12\n",
            full_header()
        );
        let file = write_csv(&body);
        let records = read_clinical_csv(file.path(), false).unwrap();
        let afp_slot = CLINICAL_FEATURES.iter().position(|&f| f == "afp").unwrap();
        assert!(records[0].missing[afp_slot]);
        assert_eq!(records[0].feature("afp"), None);
    }

    #[test]
    fn documented_binary_codebook() {
        let body = format!(
            "{}\nP1,1,yes,no,2,II,no,yes,yes,1.0,no,no,yes,63,40,12\n\
             P2,1,yes,no,2,II,no,yes,no,1.0,no,no,yes,63,40,12\n",
            full_header()
        );
        let file = write_csv(&body);
        let records = read_clinical_csv(file.path(), false).unwrap();
        assert_eq!(records[0].feature("alcohol"), Some(1.0));
        assert_eq!(records[1].feature("alcohol"), Some(0.0));
    }

    #[test]
    fn schema_violations_are_typed() {
        let body = "patient_id,age\nP1,63\n";
        let file = write_csv(body);
        assert!(matches!(
            read_clinical_csv(file.path(), false),
            Err(VolioError::MissingColumn(_))
        ));

        let body = format!(
            "{},extra\nP1,1,yes,no,2,II,no,yes,yes,1.0,no,no,yes,63,40,12,zzz\n",
            full_header()
        );
        let file = write_csv(&body);
        assert!(matches!(
            read_clinical_csv(file.path(), false),
            Err(VolioError::UnknownColumn(_))
        ));
        assert!(read_clinical_csv(file.path(), true).is_ok());

        let body = format!(
            "{}\nP1,1,maybe,no,2,II,no,yes,yes,1.0,no,no,yes,63,40,12\n",
            full_header()
        );
        let file = write_csv(&body);
        match read_clinical_csv(file.path(), false) {
            Err(VolioError::UnparsableCell { row, column, .. }) => {
                assert_eq!(row, 0);
                assert_eq!(column, "personal_history_cancer");
            }
            other => panic!("expected UnparsableCell, got {other:?}"),
        }
    }
}
