//! On-disk formats: prediction dumps, label sidecars, template files,
//! prediction tables, and JSON reports.
//!
//! Dumps, sidecars and prediction tables are CSV. Their first record names the
//! format and version, so a reader can reject foreign files before looking at
//! any data. The full grammar is in `docs/FORMATS.md` at the repository root.
//!
//! Floats are written in shortest round-trip decimal form, so reading back a
//! written file reproduces every `f64` bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{
    CrispLabel, DecisionProfile, DecisionTemplateSet, DecisionVector, EnsembleSpec, LabelSpace,
    ProbMatrix, RowSumPolicy,
};
use crate::inference::{CropGroup, Prediction};

pub const DUMP_FORMAT: &str = "dtfusion-dump";
pub const LABELS_FORMAT: &str = "dtfusion-labels";
pub const TEMPLATES_FORMAT: &str = "dtfusion-templates";
pub const PREDICTIONS_FORMAT: &str = "dtfusion-predictions";
pub const FORMAT_VERSION: u32 = 1;

/// Base-model outputs for a set of samples, grouped by sample then crop.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDump {
    pub ensemble: EnsembleSpec,
    pub label_space: LabelSpace,
    /// Keyed and ordered by sample id.
    pub samples: BTreeMap<String, CropGroup>,
}

impl PredictionDump {
    pub fn new(ensemble: EnsembleSpec, label_space: LabelSpace) -> Self {
        Self { ensemble, label_space, samples: BTreeMap::new() }
    }

    /// Add a sample, checking its shape against the header.
    pub fn insert(&mut self, group: CropGroup) -> Result<()> {
        let want = (self.ensemble.model_count(), self.label_space.class_count());
        let got = group.profiles()[0].matrix().shape();
        if got != want {
            return Err(Error::shape(format!(
                "sample {:?} is {}x{}, dump expects {}x{}",
                group.sample_id(),
                got.0,
                got.1,
                want.0,
                want.1
            )));
        }
        if self.samples.contains_key(group.sample_id()) {
            return Err(Error::validation(format!("duplicate sample {:?}", group.sample_id())));
        }
        self.samples.insert(group.sample_id().to_owned(), group);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Largest crop count over all samples.
    pub fn max_crops(&self) -> usize {
        self.samples.values().map(CropGroup::len).max().unwrap_or(0)
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .flexible(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, csv::Position::line);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse { path: path.into(), line, message: format!("{other:?}") },
    }
}

/// Pulls records one at a time, tracking line numbers for diagnostics.
struct Records {
    reader: csv::Reader<File>,
    path: std::path::PathBuf,
    record: csv::StringRecord,
    last_line: u64,
}

impl Records {
    fn open(path: &Path) -> Result<Self> {
        Ok(Self {
            reader: csv_reader(path)?,
            path: path.into(),
            record: csv::StringRecord::new(),
            last_line: 0,
        })
    }

    fn next(&mut self) -> Result<Option<(u64, Vec<String>)>> {
        loop {
            let more = self
                .reader
                .read_record(&mut self.record)
                .map_err(|e| csv_err(&self.path, e))?;
            if !more {
                return Ok(None);
            }
            let line = self.record.position().map_or(self.last_line + 1, csv::Position::line);
            self.last_line = line;
            // csv yields a single empty field for blank lines
            if self.record.len() == 1 && self.record[0].trim().is_empty() {
                continue;
            }
            return Ok(Some((line, self.record.iter().map(str::to_owned).collect())));
        }
    }

    fn expect(&mut self, what: &str) -> Result<(u64, Vec<String>)> {
        self.next()?.ok_or_else(|| self.parse_error(self.last_line + 1, format!("missing {what}")))
    }

    fn parse_error(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Parse { path: self.path.clone(), line, message: message.into() }
    }

    fn format_line(&mut self, format: &str) -> Result<()> {
        let (line, fields) = self.expect("format line")?;
        if fields.first().map(String::as_str) != Some(format) {
            return Err(self.parse_error(
                line,
                format!("not a {format} file (first record should be `{format},{FORMAT_VERSION}`)"),
            ));
        }
        let version = fields.get(1).map(|v| v.trim().to_owned()).unwrap_or_default();
        if fields.len() != 2 || version != FORMAT_VERSION.to_string() {
            return Err(Error::VersionMismatch {
                path: self.path.clone(),
                found: fields.join(","),
                expected: format!("{format},{FORMAT_VERSION}"),
            });
        }
        Ok(())
    }

    fn named_list(&mut self, key: &str) -> Result<(u64, Vec<String>)> {
        let (line, mut fields) = self.expect(&format!("`{key}` header"))?;
        if fields.first().map(String::as_str) != Some(key) {
            return Err(self.parse_error(line, format!("expected `{key},...` header record")));
        }
        fields.remove(0);
        Ok((line, fields))
    }

    fn column_header(&mut self, expected: &[String]) -> Result<()> {
        let (line, fields) = self.expect("column header")?;
        if fields != expected {
            return Err(self.parse_error(
                line,
                format!("expected column header `{}`", expected.join(",")),
            ));
        }
        Ok(())
    }
}

fn dump_columns(class_count: usize) -> Vec<String> {
    ["sample_id", "crop_id", "model_index"]
        .iter()
        .map(|s| s.to_string())
        .chain((1..=class_count).map(|c| format!("p_{c}")))
        .collect()
}

/// Read and fully validate a prediction dump.
pub fn read_dump(path: impl AsRef<Path>, policy: RowSumPolicy) -> Result<PredictionDump> {
    let path = path.as_ref();
    let mut rec = Records::open(path)?;
    rec.format_line(DUMP_FORMAT)?;
    let (line, models) = rec.named_list("models")?;
    let ensemble = EnsembleSpec::new(models)
        .map_err(|e| rec.parse_error(line, format!("bad model list: {e}")))?;
    let (line, classes) = rec.named_list("classes")?;
    let label_space = LabelSpace::new(classes)
        .map_err(|e| rec.parse_error(line, format!("bad class list: {e}")))?;
    let (k, c) = (ensemble.model_count(), label_space.class_count());
    rec.column_header(&dump_columns(c))?;

    type Slots = Vec<Option<DecisionVector>>;
    let mut rows: BTreeMap<String, BTreeMap<u32, Slots>> = BTreeMap::new();
    while let Some((line, fields)) = rec.next()? {
        if fields.len() != 3 + c {
            return Err(Error::ClassCount {
                path: path.into(),
                line,
                expected: c,
                found: fields.len().saturating_sub(3),
            });
        }
        let sample = fields[0].clone();
        if sample.is_empty() {
            return Err(rec.parse_error(line, "empty sample_id"));
        }
        let crop: u32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| rec.parse_error(line, format!("bad crop_id {:?}", fields[1])))?;
        let model: usize = fields[2]
            .trim()
            .parse()
            .map_err(|_| rec.parse_error(line, format!("bad model_index {:?}", fields[2])))?;
        if model >= k {
            return Err(rec.parse_error(line, format!("model_index {model} out of range for {k} models")));
        }
        let probs = fields[3..]
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| rec.parse_error(line, format!("bad probability: {e}")))?;
        let vector = DecisionVector::with_policy(probs, policy).map_err(|e| match e {
            Error::RowSum { sum, tolerance } => {
                Error::RowSumAt { path: path.into(), line, sum, tolerance }
            }
            other => rec.parse_error(line, other.to_string()),
        })?;
        let slots = rows
            .entry(sample.clone())
            .or_default()
            .entry(crop)
            .or_insert_with(|| vec![None; k]);
        if slots[model].is_some() {
            return Err(Error::DuplicateRow { path: path.into(), line, sample, crop, model });
        }
        slots[model] = Some(vector);
    }

    let mut dump = PredictionDump::new(ensemble, label_space);
    for (sample, crops) in rows {
        let mut ids = Vec::with_capacity(crops.len());
        let mut profiles = Vec::with_capacity(crops.len());
        for (crop, slots) in crops {
            let vectors = slots
                .into_iter()
                .enumerate()
                .map(|(model, v)| {
                    v.ok_or_else(|| Error::MissingModelRow {
                        path: path.into(),
                        sample: sample.clone(),
                        crop,
                        model,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            ids.push(crop);
            profiles.push(DecisionProfile::from_vectors(vectors)?);
        }
        dump.insert(CropGroup::with_crop_ids(sample, ids, profiles)?)?;
    }
    Ok(dump)
}

fn flush<W: Write>(w: csv::Writer<W>, path: &Path) -> Result<()> {
    let mut inner = w
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

/// Write a dump in canonical order: sample id, then crop id, then model index.
pub fn write_dump(dump: &PredictionDump, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let err = |e| csv_err(path, e);
    w.write_record([DUMP_FORMAT, &FORMAT_VERSION.to_string()]).map_err(err)?;
    w.write_record(std::iter::once("models").chain(dump.ensemble.names().iter().map(String::as_str)))
        .map_err(err)?;
    w.write_record(std::iter::once("classes").chain(dump.label_space.names().iter().map(String::as_str)))
        .map_err(err)?;
    w.write_record(dump_columns(dump.label_space.class_count())).map_err(err)?;
    let mut fields = Vec::new();
    for (sample, group) in &dump.samples {
        for (crop, profile) in group.crop_ids().iter().zip(group.profiles()) {
            for (model, row) in profile.matrix().row_iter().enumerate() {
                fields.clear();
                fields.push(sample.clone());
                fields.push(crop.to_string());
                fields.push(model.to_string());
                fields.extend(row.iter().map(f64::to_string));
                w.write_record(&fields).map_err(err)?;
            }
        }
    }
    flush(w, path)
}

/// Read a label sidecar, resolving class names against `labels`.
pub fn read_labels(path: impl AsRef<Path>, labels: &LabelSpace) -> Result<BTreeMap<String, CrispLabel>> {
    let path = path.as_ref();
    let mut rec = Records::open(path)?;
    rec.format_line(LABELS_FORMAT)?;
    rec.column_header(&["sample_id".to_string(), "class_name".to_string()])?;
    let mut out = BTreeMap::new();
    while let Some((line, fields)) = rec.next()? {
        let [sample, class]: [String; 2] = fields
            .try_into()
            .map_err(|f: Vec<String>| rec.parse_error(line, format!("expected 2 fields, found {}", f.len())))?;
        if sample.is_empty() {
            return Err(rec.parse_error(line, "empty sample_id"));
        }
        let index = labels.index_of(&class).ok_or_else(|| {
            Error::validation(format!("{}: line {line}: unknown class {class:?}", path.display()))
        })?;
        let label = CrispLabel::new(index, labels)?;
        if out.insert(sample.clone(), label).is_some() {
            return Err(Error::validation(format!(
                "{}: line {line}: duplicate label for sample {sample:?}",
                path.display()
            )));
        }
    }
    Ok(out)
}

pub fn write_labels(
    path: impl AsRef<Path>,
    sample_labels: &BTreeMap<String, CrispLabel>,
    labels: &LabelSpace,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let err = |e| csv_err(path, e);
    w.write_record([LABELS_FORMAT, &FORMAT_VERSION.to_string()]).map_err(err)?;
    w.write_record(["sample_id", "class_name"]).map_err(err)?;
    for (sample, label) in sample_labels {
        let name = labels.name(label.index()).ok_or_else(|| {
            Error::validation(format!("label {} out of range for sample {sample:?}", label.index()))
        })?;
        w.write_record([sample.as_str(), name]).map_err(err)?;
    }
    flush(w, path)
}

/// Pair every dump sample with its label, in sample-id order.
///
/// Fails if a label names a sample missing from the dump, or a dump sample
/// has no label.
pub fn align<'a>(
    dump: &'a PredictionDump,
    labels: &BTreeMap<String, CrispLabel>,
) -> Result<(Vec<&'a CropGroup>, Vec<CrispLabel>)> {
    if let Some(orphan) = labels.keys().find(|id| !dump.samples.contains_key(*id)) {
        return Err(Error::validation(format!(
            "label sidecar references sample {orphan:?} which is not in the dump"
        )));
    }
    dump.samples
        .iter()
        .map(|(id, group)| {
            labels
                .get(id)
                .map(|&l| (group, l))
                .ok_or_else(|| Error::validation(format!("sample {id:?} has no label")))
        })
        .collect::<Result<Vec<_>>>()
        .map(|pairs| pairs.into_iter().unzip())
}

#[derive(Serialize, Deserialize)]
struct TemplateFile {
    format: String,
    version: u32,
    models: Vec<String>,
    classes: Vec<String>,
    templates: Vec<TemplateEntry>,
}

#[derive(Serialize, Deserialize)]
struct TemplateEntry {
    class: String,
    support: usize,
    matrix: Vec<Vec<f64>>,
}

pub fn write_templates(dt: &DecisionTemplateSet, path: impl AsRef<Path>) -> Result<()> {
    if dt.templates().is_empty() {
        return Err(Error::validation("refusing to write an empty template set"));
    }
    let file = TemplateFile {
        format: TEMPLATES_FORMAT.into(),
        version: FORMAT_VERSION,
        models: dt.ensemble().names().to_vec(),
        classes: dt.label_space().names().to_vec(),
        templates: dt
            .label_space()
            .names()
            .iter()
            .zip(dt.templates())
            .zip(dt.support_counts())
            .map(|((class, m), &support)| TemplateEntry {
                class: class.clone(),
                support,
                matrix: m.to_rows(),
            })
            .collect(),
    };
    write_json(path, &file)
}

pub fn read_templates(path: impl AsRef<Path>) -> Result<DecisionTemplateSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: TemplateFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    if file.format != TEMPLATES_FORMAT || file.version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.into(),
            found: format!("{},{}", file.format, file.version),
            expected: format!("{TEMPLATES_FORMAT},{FORMAT_VERSION}"),
        });
    }
    let invalid = |e: Error| Error::validation(format!("{}: {e}", path.display()));
    if file.templates.is_empty() {
        return Err(invalid(Error::validation("template list is empty")));
    }
    let label_space = LabelSpace::new(file.classes).map_err(invalid)?;
    let ensemble = EnsembleSpec::new(file.models).map_err(invalid)?;
    let mut matrices = Vec::with_capacity(file.templates.len());
    let mut supports = Vec::with_capacity(file.templates.len());
    for (c, entry) in file.templates.into_iter().enumerate() {
        if label_space.name(c) != Some(entry.class.as_str()) {
            return Err(invalid(Error::validation(format!(
                "template {c} is for class {:?}, expected {:?}",
                entry.class,
                label_space.name(c).unwrap_or("<none>")
            ))));
        }
        matrices.push(ProbMatrix::from_rows(&entry.matrix).map_err(invalid)?);
        supports.push(entry.support);
    }
    DecisionTemplateSet::from_parts(label_space, ensemble, matrices, supports).map_err(|e| match e {
        Error::EmptyClasses(_) => e,
        other => invalid(other),
    })
}

/// One row of a predictions table.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub sample_id: String,
    pub class_name: String,
    pub scores: Vec<f64>,
}

pub fn write_predictions(
    path: impl AsRef<Path>,
    labels: &LabelSpace,
    rows: &[(&str, &Prediction)],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let err = |e| csv_err(path, e);
    let measure = rows.first().map_or_else(String::new, |(_, p)| p.measure.to_string());
    w.write_record([PREDICTIONS_FORMAT, &FORMAT_VERSION.to_string()]).map_err(err)?;
    w.write_record(["measure", measure.as_str()]).map_err(err)?;
    w.write_record(
        ["sample_id", "predicted"]
            .into_iter()
            .chain(labels.names().iter().map(String::as_str)),
    )
    .map_err(err)?;
    let mut fields = Vec::new();
    for (id, pred) in rows {
        fields.clear();
        fields.push(id.to_string());
        fields.push(labels.name(pred.class_index).unwrap_or_default().to_owned());
        fields.extend(pred.scores.iter().map(f64::to_string));
        w.write_record(&fields).map_err(err)?;
    }
    flush(w, path)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<(LabelSpace, Vec<PredictionRow>)> {
    let path = path.as_ref();
    let mut rec = Records::open(path)?;
    rec.format_line(PREDICTIONS_FORMAT)?;
    rec.named_list("measure")?;
    let (line, mut header) = rec.expect("column header")?;
    if header.len() < 4 || header[0] != "sample_id" || header[1] != "predicted" {
        return Err(rec.parse_error(line, "expected `sample_id,predicted,<classes>` header"));
    }
    let labels = LabelSpace::new(header.split_off(2))
        .map_err(|e| rec.parse_error(line, e.to_string()))?;
    let mut out = Vec::new();
    while let Some((line, fields)) = rec.next()? {
        if fields.len() != 2 + labels.class_count() {
            return Err(rec.parse_error(line, "wrong number of fields"));
        }
        let scores = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| rec.parse_error(line, e.to_string()))?;
        out.push(PredictionRow { sample_id: fields[0].clone(), class_name: fields[1].clone(), scores });
    }
    Ok((labels, out))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}
