//! Domain data model: pairwise preference instances, datasets, directions,
//! verdicts, and the persisted evaluation record.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which candidate output is shown first to the judge.
///
/// Every protocol run is tagged with exactly one direction; running both
/// directions and averaging cancels position bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `output1` is shown as "Output (a)" (or Response A / Model (m)).
    Forward,
    /// `output2` is shown as "Output (a)".
    Reversed,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Forward, Direction::Reversed];

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reversed => "reversed",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A verdict in presentation space: which *shown* output the judge picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalChoice {
    FirstShown,
    SecondShown,
    Invalid,
}

/// A verdict in canonical space: which *underlying* output the judge picked,
/// after undoing the presentation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalChoice {
    Output1,
    Output2,
    Invalid,
}

impl CanonicalChoice {
    pub fn is_valid(&self) -> bool {
        !matches!(self, CanonicalChoice::Invalid)
    }
}

/// Maps a local (presentation-space) choice to canonical space.
///
/// Total function: `Invalid` passes through unchanged.
pub fn canonical_preference(direction: Direction, local: LocalChoice) -> CanonicalChoice {
    match (direction, local) {
        (_, LocalChoice::Invalid) => CanonicalChoice::Invalid,
        (Direction::Forward, LocalChoice::FirstShown) => CanonicalChoice::Output1,
        (Direction::Forward, LocalChoice::SecondShown) => CanonicalChoice::Output2,
        (Direction::Reversed, LocalChoice::FirstShown) => CanonicalChoice::Output2,
        (Direction::Reversed, LocalChoice::SecondShown) => CanonicalChoice::Output1,
    }
}

/// A parsed judge decision paired with its canonical image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub local: LocalChoice,
    pub canonical: CanonicalChoice,
}

impl Verdict {
    pub fn new(direction: Direction, local: LocalChoice) -> Self {
        Verdict {
            local,
            canonical: canonical_preference(direction, local),
        }
    }

    pub fn invalid() -> Self {
        Verdict {
            local: LocalChoice::Invalid,
            canonical: CanonicalChoice::Invalid,
        }
    }

    /// A verdict already decided in canonical space (voting aggregators).
    /// The local choice is back-derived for the given direction.
    pub fn from_canonical(direction: Direction, canonical: CanonicalChoice) -> Self {
        let local = match (direction, canonical) {
            (_, CanonicalChoice::Invalid) => LocalChoice::Invalid,
            (Direction::Forward, CanonicalChoice::Output1) => LocalChoice::FirstShown,
            (Direction::Forward, CanonicalChoice::Output2) => LocalChoice::SecondShown,
            (Direction::Reversed, CanonicalChoice::Output1) => LocalChoice::SecondShown,
            (Direction::Reversed, CanonicalChoice::Output2) => LocalChoice::FirstShown,
        };
        Verdict { local, canonical }
    }
}

/// Gold preference label. The datasets are strictly binary: no ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    Output1,
    Output2,
}

impl Preference {
    pub fn as_canonical(&self) -> CanonicalChoice {
        match self {
            Preference::Output1 => CanonicalChoice::Output1,
            Preference::Output2 => CanonicalChoice::Output2,
        }
    }

    pub fn from_label(label: i64) -> Option<Preference> {
        match label {
            1 => Some(Preference::Output1),
            2 => Some(Preference::Output2),
            _ => None,
        }
    }

    pub fn label(&self) -> i64 {
        match self {
            Preference::Output1 => 1,
            Preference::Output2 => 2,
        }
    }
}

/// One pairwise comparison item: an instruction, two candidate outputs, and
/// the human gold preference. Multi-turn conversations are flattened into a
/// single instruction text upstream; the engine treats it as opaque text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub instruction: String,
    pub output1: String,
    pub output2: String,
    pub gold: Preference,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl Instance {
    /// The output texts as (first shown, second shown) for a direction.
    pub fn shown(&self, direction: Direction) -> (&str, &str) {
        match direction {
            Direction::Forward => (&self.output1, &self.output2),
            Direction::Reversed => (&self.output2, &self.output1),
        }
    }
}

/// Derived dataset statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    pub mean_instruction_words: f64,
    pub mean_output_words: f64,
}

/// An ordered, validated collection of instances. Immutable after load.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    instances: Vec<Instance>,
}

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

impl Dataset {
    /// Builds a dataset from already-validated instances.
    pub fn new(name: impl Into<String>, instances: Vec<Instance>) -> Result<Self, DataError> {
        if instances.is_empty() {
            return Err(DataError::Empty);
        }
        let dataset = Dataset {
            name: name.into(),
            instances,
        };
        let violations = validate_dataset(&dataset);
        if let Some(v) = violations.first() {
            return Err(DataError::Invalid(v.to_string()));
        }
        Ok(dataset)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn stats(&self) -> DatasetStats {
        let n = self.instances.len();
        let instr: usize = self.instances.iter().map(|i| word_count(&i.instruction)).sum();
        let out: usize = self
            .instances
            .iter()
            .map(|i| word_count(&i.output1) + word_count(&i.output2))
            .sum();
        DatasetStats {
            count: n,
            mean_instruction_words: instr as f64 / n as f64,
            mean_output_words: out as f64 / (2 * n) as f64,
        }
    }

    /// Deterministic synthetic dataset for demos and tests. Gold labels
    /// alternate with a seed-dependent phase so both categories occur.
    pub fn synthetic(name: &str, count: usize, seed: u64) -> Dataset {
        assert!(count > 0, "synthetic dataset must be non-empty");
        let phase = (seed % 2) as usize;
        let instances = (0..count)
            .map(|k| {
                let gold = if (k + phase) % 2 == 0 {
                    Preference::Output1
                } else {
                    Preference::Output2
                };
                Instance {
                    id: format!("{name}-{k:04}"),
                    instruction: format!(
                        "Summarize finding {k} of study {seed} in one sentence."
                    ),
                    output1: format!(
                        "Finding {k}: the {seed}-series measurement rose steadily across trials."
                    ),
                    output2: format!(
                        "Study {seed} reports in item {k} a flat trend with occasional spikes."
                    ),
                    gold,
                    metadata: BTreeMap::new(),
                }
            })
            .collect();
        Dataset {
            name: name.to_string(),
            instances,
        }
    }

    /// Serializes to the line-delimited interchange format accepted by
    /// [`load_dataset`].
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for instance in &self.instances {
            let row = RawRecord {
                id: Some(instance.id.clone()),
                instruction: Some(instance.instruction.clone()),
                output_1: Some(instance.output1.clone()),
                output_2: Some(instance.output2.clone()),
                label: Some(instance.gold.label()),
                metadata: if instance.metadata.is_empty() {
                    None
                } else {
                    Some(instance.metadata.clone())
                },
            };
            out.push_str(&serde_json::to_string(&row).expect("dataset row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, self.to_jsonl()).map_err(|e| DataError::Io(path.display().to_string(), e))
    }
}

/// Field names of the dataset interchange format. The defaults match the
/// documented schema; overrides let slightly different exports be ingested
/// without rewriting files.
#[derive(Debug, Clone)]
pub struct DatasetFormat {
    pub id_field: String,
    pub instruction_field: String,
    pub output1_field: String,
    pub output2_field: String,
    pub label_field: String,
    pub metadata_field: String,
}

impl Default for DatasetFormat {
    fn default() -> Self {
        DatasetFormat {
            id_field: "id".into(),
            instruction_field: "instruction".into(),
            output1_field: "output_1".into(),
            output2_field: "output_2".into(),
            label_field: "label".into(),
            metadata_field: "metadata".into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    instruction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_1: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_2: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metadata: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset file is empty")]
    Empty,
    #[error("line {line}: not a valid record: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: String },
    #[error("line {line}: field `{field}` is empty")]
    EmptyField { line: usize, field: String },
    #[error("line {line}: label {value} is outside {{1, 2}}")]
    BadLabel { line: usize, value: i64 },
    #[error("line {line}: duplicate id `{id}` (first seen at line {first_line})")]
    DuplicateId {
        id: String,
        first_line: usize,
        line: usize,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

/// Loads and validates a line-delimited dataset file.
///
/// Instances preserve file order. Any invariant violation is reported with
/// the offending line number.
pub fn load_dataset(path: &Path, format: &DatasetFormat) -> Result<Dataset, DataError> {
    let text =
        fs::read_to_string(path).map_err(|e| DataError::Io(path.display().to_string(), e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    parse_dataset(&name, &text, format)
}

/// Parses dataset text in the interchange format. Exposed so round-trip
/// checks and in-memory sources skip the filesystem.
pub fn parse_dataset(name: &str, text: &str, format: &DatasetFormat) -> Result<Dataset, DataError> {
    let mut instances = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut line_no = 0usize;
    for raw_line in text.lines() {
        line_no += 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(raw_line).map_err(|e| DataError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        let obj = value.as_object().ok_or_else(|| DataError::Parse {
            line: line_no,
            message: "record is not an object".into(),
        })?;

        let get_str = |field: &str| -> Result<String, DataError> {
            let v = obj.get(field).ok_or_else(|| DataError::MissingField {
                line: line_no,
                field: field.to_string(),
            })?;
            let s = v.as_str().ok_or_else(|| DataError::Parse {
                line: line_no,
                message: format!("field `{field}` is not a string"),
            })?;
            if s.trim().is_empty() {
                return Err(DataError::EmptyField {
                    line: line_no,
                    field: field.to_string(),
                });
            }
            Ok(s.to_string())
        };

        let id = get_str(&format.id_field)?;
        let instruction = get_str(&format.instruction_field)?;
        let output1 = get_str(&format.output1_field)?;
        let output2 = get_str(&format.output2_field)?;
        let label_value = obj
            .get(&format.label_field)
            .ok_or_else(|| DataError::MissingField {
                line: line_no,
                field: format.label_field.clone(),
            })?;
        let label = label_value.as_i64().ok_or_else(|| DataError::Parse {
            line: line_no,
            message: format!("field `{}` is not an integer", format.label_field),
        })?;
        let gold = Preference::from_label(label).ok_or(DataError::BadLabel {
            line: line_no,
            value: label,
        })?;

        let mut metadata = BTreeMap::new();
        if let Some(meta) = obj.get(&format.metadata_field) {
            let map = meta.as_object().ok_or_else(|| DataError::Parse {
                line: line_no,
                message: format!("field `{}` is not an object", format.metadata_field),
            })?;
            for (k, v) in map {
                let s = v.as_str().ok_or_else(|| DataError::Parse {
                    line: line_no,
                    message: format!("metadata value for `{k}` is not a string"),
                })?;
                metadata.insert(k.clone(), s.to_string());
            }
        }

        if let Some(&first_line) = seen.get(&id) {
            return Err(DataError::DuplicateId {
                id,
                first_line,
                line: line_no,
            });
        }
        seen.insert(id.clone(), line_no);

        instances.push(Instance {
            id,
            instruction,
            output1,
            output2,
            gold,
            metadata,
        });
    }
    if instances.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(Dataset {
        name: name.to_string(),
        instances,
    })
}

/// A single invariant violation found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// 1-based positions of the offending instances.
    pub positions: Vec<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "instance(s) {:?}: {}", self.positions, self.message)
    }
}

/// Lists all invariant violations; the report is empty iff the dataset is
/// valid.
pub fn validate_dataset(dataset: &Dataset) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (idx, instance) in dataset.instances.iter().enumerate() {
        let pos = idx + 1;
        if let Some(&first) = seen.get(instance.id.as_str()) {
            violations.push(Violation {
                positions: vec![first, pos],
                message: format!("duplicate id `{}`", instance.id),
            });
        } else {
            seen.insert(&instance.id, pos);
        }
        for (field, text) in [
            ("instruction", &instance.instruction),
            ("output_1", &instance.output1),
            ("output_2", &instance.output2),
        ] {
            if text.trim().is_empty() {
                violations.push(Violation {
                    positions: vec![pos],
                    message: format!("empty {field}"),
                });
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_preference_maps_directions() {
        use CanonicalChoice as C;
        use LocalChoice as L;
        assert_eq!(canonical_preference(Direction::Forward, L::FirstShown), C::Output1);
        assert_eq!(canonical_preference(Direction::Forward, L::SecondShown), C::Output2);
        assert_eq!(canonical_preference(Direction::Reversed, L::FirstShown), C::Output2);
        assert_eq!(canonical_preference(Direction::Reversed, L::SecondShown), C::Output1);
        assert_eq!(canonical_preference(Direction::Reversed, L::Invalid), C::Invalid);
    }

    #[test]
    fn canonical_preference_swaps_between_directions() {
        for local in [LocalChoice::FirstShown, LocalChoice::SecondShown] {
            assert_ne!(
                canonical_preference(Direction::Forward, local),
                canonical_preference(Direction::Reversed, local)
            );
        }
    }

    #[test]
    fn loads_well_formed_records() {
        let text = concat!(
            r#"{"id":"a","instruction":"Do X","output_1":"one","output_2":"two","label":1}"#,
            "\n",
            r#"{"id":"b","instruction":"Do Y","output_1":"three","output_2":"four","label":2,"metadata":{"source":"unit"}}"#,
            "\n",
        );
        let ds = parse_dataset("t", text, &DatasetFormat::default()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.instances()[0].gold, Preference::Output1);
        assert_eq!(ds.instances()[1].metadata["source"], "unit");
    }

    #[test]
    fn rejects_bad_label() {
        let text = r#"{"id":"a","instruction":"i","output_1":"x","output_2":"y","label":3}"#;
        let err = parse_dataset("t", text, &DatasetFormat::default()).unwrap_err();
        match err {
            DataError::BadLabel { line, value } => {
                assert_eq!(line, 1);
                assert_eq!(value, 3);
            }
            other => panic!("expected BadLabel, got {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_id_and_missing_field() {
        let dup = concat!(
            r#"{"id":"a","instruction":"i","output_1":"x","output_2":"y","label":1}"#,
            "\n",
            r#"{"id":"a","instruction":"j","output_1":"x","output_2":"y","label":2}"#,
        );
        assert!(matches!(
            parse_dataset("t", dup, &DatasetFormat::default()),
            Err(DataError::DuplicateId { line: 2, .. })
        ));
        let missing = r#"{"id":"a","output_1":"x","output_2":"y","label":1}"#;
        assert!(matches!(
            parse_dataset("t", missing, &DatasetFormat::default()),
            Err(DataError::MissingField { .. })
        ));
        assert!(matches!(
            parse_dataset("t", "\n\n", &DatasetFormat::default()),
            Err(DataError::Empty)
        ));
    }

    #[test]
    fn validation_report_names_both_duplicate_positions() {
        let mut ds = Dataset::synthetic("v", 3, 0);
        ds.instances[2].id = ds.instances[0].id.clone();
        ds.instances[1].instruction = "  ".into();
        let report = validate_dataset(&ds);
        assert_eq!(report.len(), 2);
        assert!(report.iter().any(|v| v.positions == vec![1, 3]));
        assert!(report.iter().any(|v| v.positions == vec![2]));
        assert!(validate_dataset(&Dataset::synthetic("ok", 5, 1)).is_empty());
    }

    #[test]
    fn stats_are_recomputable() {
        let ds = Dataset::synthetic("s", 8, 3);
        let stats = ds.stats();
        assert_eq!(stats.count, 8);
        assert!(stats.mean_instruction_words > 0.0);
        assert!(stats.mean_output_words > 0.0);
    }

    proptest! {
        #[test]
        fn dataset_round_trips_through_jsonl(count in 1usize..30, seed in 0u64..1000) {
            let ds = Dataset::synthetic("round", count, seed);
            let text = ds.to_jsonl();
            let back = parse_dataset("round", &text, &DatasetFormat::default()).unwrap();
            prop_assert_eq!(ds, back);
        }
    }
}
