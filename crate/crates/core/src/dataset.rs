//! Embedding datasets and the EMB1 on-disk format.
//!
//! EMB1 layout (all integers little-endian):
//!
//! ```text
//! "EMB1"            4 bytes magic
//! N                 u32
//! D                 u32
//! flags             u8   bit0 = labels present, bit1 = ids present
//! values            N*D f32, row-major
//! labels            N i8 (if bit0)
//! ids               N x (u32 byte length, UTF-8 bytes) (if bit1)
//! ```
//!
//! Values are stored as `f32` and widened to `f64` on load.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::rng;

pub const MAGIC: &[u8; 4] = b"EMB1";
const FLAG_LABELS: u8 = 0b01;
const FLAG_IDS: u8 = 0b10;

/// In-distribution label.
pub const ID: i8 = -1;
/// Out-of-distribution label.
pub const OOD: i8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    vectors: RowMatrix,
    labels: Option<Vec<i8>>,
    ids: Option<Vec<String>>,
}

impl EmbeddingDataset {
    pub fn new(
        vectors: RowMatrix,
        labels: Option<Vec<i8>>,
        ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let ds = Self {
            vectors,
            labels,
            ids,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn unlabeled(vectors: RowMatrix) -> Result<Self> {
        Self::new(vectors, None, None)
    }

    pub fn labeled(vectors: RowMatrix, labels: Vec<i8>) -> Result<Self> {
        Self::new(vectors, Some(labels), None)
    }

    fn validate(&self) -> Result<()> {
        let n = self.vectors.rows();
        if n == 0 || self.vectors.cols() == 0 {
            return Err(Error::Validation(format!(
                "dataset must have N >= 1 and D >= 1, got {}x{}",
                n,
                self.vectors.cols()
            )));
        }
        if let Some(pos) = self.vectors.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at row {}, column {}",
                pos / self.vectors.cols(),
                pos % self.vectors.cols()
            )));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::Validation(format!(
                    "{} labels for {n} rows",
                    labels.len()
                )));
            }
            if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l != ID && l != OOD) {
                return Err(Error::Validation(format!(
                    "label {l} at row {i}; labels must be -1 (ID) or +1 (OOD)"
                )));
            }
        }
        if let Some(ids) = &self.ids {
            if ids.len() != n {
                return Err(Error::Validation(format!("{} ids for {n} rows", ids.len())));
            }
            let mut seen = HashSet::with_capacity(n);
            for id in ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::Validation(format!("duplicate id {id:?}")));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    /// Always false for a constructed dataset; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vectors(&self) -> &RowMatrix {
        &self.vectors
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn labels(&self) -> Option<&[i8]> {
        self.labels.as_deref()
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    /// Labels, or a validation error naming `what` if the dataset is unlabeled.
    pub fn require_labels(&self, what: &str) -> Result<&[i8]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Validation(format!("{what} requires a labeled dataset")))
    }

    /// Labels, required to contain both classes.
    pub fn require_both_classes(&self, what: &str) -> Result<&[i8]> {
        let labels = self.require_labels(what)?;
        check_both_classes(labels, what)?;
        Ok(labels)
    }

    /// New dataset made of the given rows in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Validation(format!(
                "index {bad} out of range for {} rows",
                self.len()
            )));
        }
        let pick = |v: &Vec<_>| indices.iter().map(|&i| v[i]).collect();
        let labels = self.labels.as_ref().map(pick);
        let ids = self
            .ids
            .as_ref()
            .map(|ids| indices.iter().map(|&i| ids[i].clone()).collect());
        Self::new(self.vectors.select_rows(indices), labels, ids)
    }

    pub fn count_label(&self, label: i8) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|&&x| x == label).count())
    }
}

pub(crate) fn check_both_classes(labels: &[i8], what: &str) -> Result<()> {
    let pos = labels.iter().filter(|&&l| l == OOD).count();
    let neg = labels.iter().filter(|&&l| l == ID).count();
    if pos == 0 || neg == 0 {
        return Err(Error::Validation(format!(
            "{what} needs both ID and OOD labels, got {neg} ID and {pos} OOD"
        )));
    }
    Ok(())
}

/// Serializes a dataset to EMB1 bytes.
pub fn encode_embeddings(ds: &EmbeddingDataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let n = u32::try_from(ds.len()).map_err(|_| Error::Validation("N exceeds u32".into()))?;
    let d = u32::try_from(ds.dim()).map_err(|_| Error::Validation("D exceeds u32".into()))?;
    for v in ds.vectors.as_slice() {
        if !(*v as f32).is_finite() {
            return Err(Error::Validation(format!("value {v} overflows float32")));
        }
    }

    let mut flags = 0u8;
    if ds.labels.is_some() {
        flags |= FLAG_LABELS;
    }
    if ds.ids.is_some() {
        flags |= FLAG_IDS;
    }

    let mut out = Vec::with_capacity(13 + ds.vectors.as_slice().len() * 4 + ds.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    out.push(flags);
    for &v in ds.vectors.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    if let Some(labels) = &ds.labels {
        out.extend(labels.iter().map(|&l| l as u8));
    }
    if let Some(ids) = &ds.ids {
        for id in ids {
            let len = u32::try_from(id.len())
                .map_err(|_| Error::Validation("id longer than u32::MAX bytes".into()))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated while reading {what}: need {len} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

/// Parses EMB1 bytes into a validated dataset.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingDataset> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"EMB1\"",
            String::from_utf8_lossy(magic)
        )));
    }
    let n = r.u32("N")? as usize;
    let d = r.u32("D")? as usize;
    let flags = r.take(1, "flags")?[0];
    if flags & !(FLAG_LABELS | FLAG_IDS) != 0 {
        return Err(Error::Format(format!("unknown flag bits {flags:#04x}")));
    }

    let count = n
        .checked_mul(d)
        .ok_or_else(|| Error::Format("N*D overflows".into()))?;
    let raw = r.take(
        count
            .checked_mul(4)
            .ok_or_else(|| Error::Format("N*D overflows".into()))?,
        "values",
    )?;
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();

    let labels = if flags & FLAG_LABELS != 0 {
        Some(r.take(n, "labels")?.iter().map(|&b| b as i8).collect())
    } else {
        None
    };

    let ids = if flags & FLAG_IDS != 0 {
        let mut ids = Vec::with_capacity(n);
        for i in 0..n {
            let len = r.u32("id length")? as usize;
            let raw = r.take(len, "id bytes")?;
            let s = std::str::from_utf8(raw)
                .map_err(|e| Error::Format(format!("id {i} is not UTF-8: {e}")))?;
            ids.push(s.to_owned());
        }
        Some(ids)
    } else {
        None
    };

    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }

    EmbeddingDataset::new(RowMatrix::new(n, d, values)?, labels, ids)
}

pub fn write_embeddings(path: impl AsRef<Path>, ds: &EmbeddingDataset) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_embeddings(ds)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}

/// Reads a CSV with header `id,label,f0,...,f{D-1}`. Empty label cells mean
/// "unlabeled"; either every row carries a label or none does.
pub fn read_csv(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(Error::Format(format!(
            "{}: CSV header must be id,label,f0..f{{D-1}}",
            path.display()
        )));
    }
    let d = headers.len() - 2;

    let mut values = Vec::new();
    let mut ids = Vec::new();
    let mut labels: Vec<Option<i8>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        ids.push(record[0].to_owned());
        let label = record[1].trim();
        labels.push(if label.is_empty() {
            None
        } else {
            Some(label.parse::<i8>().map_err(|_| {
                Error::Validation(format!("row {line}: label {label:?} is not -1 or 1"))
            })?)
        });
        for cell in record.iter().skip(2) {
            values.push(cell.trim().parse::<f64>().map_err(|_| {
                Error::Validation(format!("row {line}: {cell:?} is not a number"))
            })?);
        }
    }

    let labels = match labels.iter().filter(|l| l.is_some()).count() {
        0 => None,
        k if k == labels.len() => Some(labels.into_iter().flatten().collect()),
        _ => {
            return Err(Error::Validation(
                "either all CSV rows carry a label or none do".into(),
            ))
        }
    };
    let rows = ids.len();
    EmbeddingDataset::new(RowMatrix::new(rows, d, values)?, labels, Some(ids))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// Loads either an EMB1 file or, for a `.csv` extension, a CSV export.
pub fn load_any(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => read_csv(path),
        _ => read_embeddings(path),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: EmbeddingDataset,
    pub val: EmbeddingDataset,
    pub test: EmbeddingDataset,
}

impl DatasetSplit {
    pub fn new(train: EmbeddingDataset, val: EmbeddingDataset, test: EmbeddingDataset) -> Result<Self> {
        if train.count_label(OOD) > 0 {
            return Err(Error::Validation(
                "training split must not contain OOD (+1) samples".into(),
            ));
        }
        val.require_both_classes("validation split")?;
        test.require_both_classes("test split")?;
        if train.dim() != val.dim() || train.dim() != test.dim() {
            return Err(Error::Validation(format!(
                "split dimensions differ: train {}, val {}, test {}",
                train.dim(),
                val.dim(),
                test.dim()
            )));
        }
        Ok(Self { train, val, test })
    }
}

/// Row indices of each part of a split, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partitions row indices. ID rows are shuffled and cut by the two fractions
/// (rounded), the remainder going to train; OOD rows go only to val/test in
/// the ratio `val_fraction : test_fraction`.
pub fn partition_indices(
    labels: &[i8],
    val_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitIndices> {
    let in_open_unit = |f: f64| f > 0.0 && f < 1.0;
    if !in_open_unit(val_fraction) || !in_open_unit(test_fraction) {
        return Err(Error::Config(format!(
            "split fractions must lie in (0,1), got {val_fraction} and {test_fraction}"
        )));
    }
    if val_fraction + test_fraction >= 1.0 {
        return Err(Error::Config(format!(
            "val_fraction + test_fraction must be < 1, got {}",
            val_fraction + test_fraction
        )));
    }

    let mut id_rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == ID).collect();
    let mut ood_rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == OOD).collect();

    let n_id = id_rows.len();
    let id_val = (n_id as f64 * val_fraction).round() as usize;
    let id_test = (n_id as f64 * test_fraction).round() as usize;
    let n_ood = ood_rows.len();
    let ood_val = (n_ood as f64 * val_fraction / (val_fraction + test_fraction)).round() as usize;
    let ood_test = n_ood.saturating_sub(ood_val);

    if id_val == 0 || id_test == 0 || id_val + id_test >= n_id {
        return Err(Error::Config(format!(
            "{n_id} ID samples cannot fill train/val/test with fractions {val_fraction}/{test_fraction}"
        )));
    }
    if ood_val == 0 || ood_test == 0 {
        return Err(Error::Config(format!(
            "{n_ood} OOD samples cannot populate both val and test"
        )));
    }

    let mut rng = rng::derive(seed, &[rng::tag::SPLIT]);
    id_rows.shuffle(&mut rng);
    ood_rows.shuffle(&mut rng);

    let mut val: Vec<usize> = id_rows[..id_val].to_vec();
    let mut test: Vec<usize> = id_rows[id_val..id_val + id_test].to_vec();
    let mut train: Vec<usize> = id_rows[id_val + id_test..].to_vec();
    val.extend_from_slice(&ood_rows[..ood_val]);
    test.extend_from_slice(&ood_rows[ood_val..]);
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, val, test })
}

pub fn split_dataset(
    ds: &EmbeddingDataset,
    val_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    let labels = ds
        .labels()
        .ok_or_else(|| Error::Config("splitting requires a labeled dataset".into()))?;
    let idx = partition_indices(labels, val_fraction, test_fraction, seed)?;
    DatasetSplit::new(
        ds.subset(&idx.train)?,
        ds.subset(&idx.val)?,
        ds.subset(&idx.test)?,
    )
}
