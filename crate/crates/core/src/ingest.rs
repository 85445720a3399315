//! Matrix file formats, dataset loading and the missing-label simulator.
//!
//! Three on-disk matrix formats are supported:
//!
//! * dense text: a header line `rows cols`, then `rows` lines of
//!   whitespace-separated values;
//! * triplet text: lines `row col value` with 0-based indices, optionally
//!   preceded by a two-token header `rows cols`;
//! * raw binary: two little-endian `u64` dimensions (rows, cols) followed by
//!   `rows·cols` little-endian `f64` values in row-major order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datamodel::{FeatureMatrix, ObservationMask, PartialLabels};
use crate::error::{Error, Result};

const RAW_HEADER_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    DenseText,
    TripletText,
    RawBinary,
}

impl MatrixFormat {
    /// Guesses the format from the file extension: `.bin` is raw binary,
    /// `.tri`/`.triplet`/`.coo` are triplets, anything else is dense text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => MatrixFormat::RawBinary,
            Some("tri") | Some("triplet") | Some("coo") => MatrixFormat::TripletText,
            _ => MatrixFormat::DenseText,
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense-text" => Ok(MatrixFormat::DenseText),
            "triplet-text" => Ok(MatrixFormat::TripletText),
            "raw-binary" => Ok(MatrixFormat::RawBinary),
            other => Err(Error::validation(format!(
                "unknown matrix format '{other}' (expected dense-text, triplet-text or raw-binary)"
            ))),
        }
    }
}

impl std::fmt::Display for MatrixFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MatrixFormat::DenseText => "dense-text",
            MatrixFormat::TripletText => "triplet-text",
            MatrixFormat::RawBinary => "raw-binary",
        })
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_value(path: &Path, line: usize, token: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| Error::ingest(path, line, format!("cannot parse '{token}' as a number")))?;
    if !v.is_finite() {
        return Err(Error::ingest(
            path,
            line,
            format!("non-finite value '{token}'"),
        ));
    }
    Ok(v)
}

fn parse_index(path: &Path, line: usize, token: &str) -> Result<usize> {
    token
        .parse()
        .map_err(|_| Error::ingest(path, line, format!("cannot parse '{token}' as an index")))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_dense_text(path: &Path, text: &str) -> Result<Array2<f64>> {
    let mut lines = content_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::ingest(path, 1, "empty file, expected header 'rows cols'"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::ingest(path, hline, "header must be 'rows cols'"));
    }
    let rows = parse_index(path, hline, dims[0])?;
    let cols = parse_index(path, hline, dims[1])?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (lineno, line) in lines {
        if seen == rows {
            return Err(Error::ingest(
                path,
                lineno,
                format!("more than the {rows} rows declared in the header"),
            ));
        }
        let before = data.len();
        for token in line.split_whitespace() {
            data.push(parse_value(path, lineno, token)?);
        }
        let got = data.len() - before;
        if got != cols {
            return Err(Error::ingest(
                path,
                lineno,
                format!("dimension mismatch: header declares {cols} columns, row has {got}"),
            ));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::ingest(
            path,
            0,
            format!("dimension mismatch: header declares {rows} rows, file has {seen}"),
        ));
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked"))
}

pub fn encode_dense_text(a: ArrayView2<'_, f64>) -> String {
    let mut out = format!("{} {}\n", a.nrows(), a.ncols());
    for row in a.axis_iter(Axis(0)) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Triplets read from a file, with the optional `rows cols` header.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplets {
    pub header: Option<(usize, usize)>,
    pub entries: Vec<(usize, usize, f64)>,
}

pub fn parse_triplets(path: &Path, text: &str) -> Result<Triplets> {
    let mut header = None;
    let mut entries = Vec::new();
    for (k, (lineno, line)) in content_lines(text).enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.len() {
            2 if k == 0 => {
                header = Some((
                    parse_index(path, lineno, tokens[0])?,
                    parse_index(path, lineno, tokens[1])?,
                ));
            }
            3 => entries.push((
                parse_index(path, lineno, tokens[0])?,
                parse_index(path, lineno, tokens[1])?,
                parse_value(path, lineno, tokens[2])?,
            )),
            _ => {
                return Err(Error::ingest(
                    path,
                    lineno,
                    format!("expected 'row col value', found {} fields", tokens.len()),
                ))
            }
        }
    }
    Ok(Triplets { header, entries })
}

/// Densifies triplets into a `rows×cols` matrix. Missing entries are 0.
pub fn triplets_to_dense(
    path: &Path,
    triplets: &Triplets,
    shape: Option<(usize, usize)>,
) -> Result<Array2<f64>> {
    let (rows, cols) = resolve_triplet_shape(path, triplets, shape)?;
    let mut out = Array2::zeros((rows, cols));
    for &(i, j, v) in &triplets.entries {
        out[[i, j]] = v;
    }
    Ok(out)
}

fn resolve_triplet_shape(
    path: &Path,
    triplets: &Triplets,
    shape: Option<(usize, usize)>,
) -> Result<(usize, usize)> {
    let inferred = triplets
        .entries
        .iter()
        .fold((0, 0), |(r, c), &(i, j, _)| (r.max(i + 1), c.max(j + 1)));
    let (rows, cols) = match (triplets.header, shape) {
        (Some(h), Some(s)) if h != s => {
            return Err(Error::ingest(
                path,
                1,
                format!("dimension mismatch: header says {h:?}, expected {s:?}"),
            ))
        }
        (Some(h), _) => h,
        (None, Some(s)) => s,
        (None, None) => inferred,
    };
    if inferred.0 > rows || inferred.1 > cols {
        return Err(Error::ingest(
            path,
            0,
            format!("triplet index out of range for a {rows}x{cols} matrix"),
        ));
    }
    Ok((rows, cols))
}

pub fn parse_raw_binary(path: &Path, bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < RAW_HEADER_BYTES {
        return Err(Error::ingest(path, 0, "truncated raw-binary header"));
    }
    let rows = u64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::ingest(path, 0, "raw-binary dimensions overflow"))?;
    let payload = &bytes[RAW_HEADER_BYTES..];
    if payload.len() != expected {
        return Err(Error::ingest(
            path,
            0,
            format!(
                "dimension mismatch: header declares {rows}x{cols} ({expected} bytes), payload has {} bytes",
                payload.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (k, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(Error::ingest(
                path,
                0,
                format!(
                    "non-finite value at entry ({},{})",
                    k / cols.max(1),
                    k % cols.max(1)
                ),
            ));
        }
        data.push(v);
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked"))
}

pub fn encode_raw_binary(a: ArrayView2<'_, f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER_BYTES + 8 * a.len());
    out.extend_from_slice(&(a.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(a.ncols() as u64).to_le_bytes());
    for v in a.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Writes through a temporary file in the same directory, creating missing
/// parent directories first.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Reads a matrix, guessing the format from the extension unless given.
/// Triplet files without a header take their shape from `shape`, or from the
/// largest indices present.
pub fn read_matrix(
    path: &Path,
    format: Option<MatrixFormat>,
    shape: Option<(usize, usize)>,
) -> Result<Array2<f64>> {
    match format.unwrap_or_else(|| MatrixFormat::from_path(path)) {
        MatrixFormat::DenseText => parse_dense_text(path, &read_to_string(path)?),
        MatrixFormat::TripletText => {
            let t = parse_triplets(path, &read_to_string(path)?)?;
            triplets_to_dense(path, &t, shape)
        }
        MatrixFormat::RawBinary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_raw_binary(path, &bytes)
        }
    }
}

/// Writes a dense matrix. In triplet format only nonzero entries are listed.
pub fn write_matrix(
    path: &Path,
    format: Option<MatrixFormat>,
    a: ArrayView2<'_, f64>,
) -> Result<()> {
    let bytes = match format.unwrap_or_else(|| MatrixFormat::from_path(path)) {
        MatrixFormat::DenseText => encode_dense_text(a).into_bytes(),
        MatrixFormat::RawBinary => encode_raw_binary(a),
        MatrixFormat::TripletText => {
            let mut out = format!("{} {}\n", a.nrows(), a.ncols());
            for ((i, j), v) in a.indexed_iter() {
                if *v != 0.0 {
                    out.push_str(&format!("{i} {j} {v}\n"));
                }
            }
            out.into_bytes()
        }
    };
    write_atomic(path, &bytes)
}

/// How label values in a file map onto observed {0,1} entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelConvention {
    /// Values must be 0 or 1. Dense files are fully observed; triplet files
    /// observe exactly the listed entries.
    #[default]
    Binary,
    /// −1/0/+1: +1 → observed 1, −1 → observed 0, 0 → unobserved.
    Signed,
}

/// Maps a −1/0/+1 matrix to partial labels: +1 is an observed positive, −1
/// an observed negative and 0 is unobserved.
pub fn binarize_signed(values: ArrayView2<'_, f64>) -> Result<PartialLabels> {
    let (n, c) = values.dim();
    let mut coords = Vec::new();
    let mut out = Array2::zeros((n, c));
    for ((i, j), &v) in values.indexed_iter() {
        if v == 1.0 {
            coords.push((i, j));
            out[[i, j]] = 1.0;
        } else if v == -1.0 {
            coords.push((i, j));
        } else if v != 0.0 {
            return Err(Error::validation(format!(
                "signed label ({i},{j}) = {v} is not in {{-1,0,1}}"
            )));
        }
    }
    PartialLabels::new(out, ObservationMask::from_coords(n, c, coords)?)
}

/// Reads training labels. Dense files are fully observed; triplet files
/// observe the listed entries; raw-binary is treated like dense.
pub fn read_labels(
    path: &Path,
    format: Option<MatrixFormat>,
    shape: Option<(usize, usize)>,
    convention: LabelConvention,
) -> Result<PartialLabels> {
    let format = format.unwrap_or_else(|| MatrixFormat::from_path(path));
    let check_binary = |line: usize, v: f64| -> Result<()> {
        let ok = match convention {
            LabelConvention::Binary => v == 0.0 || v == 1.0,
            LabelConvention::Signed => v == 0.0 || v == 1.0 || v == -1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ingest(
                path,
                line,
                format!("label value {v} outside the allowed set"),
            ))
        }
    };
    match format {
        MatrixFormat::TripletText => {
            let text = read_to_string(path)?;
            let t = parse_triplets(path, &text)?;
            let (rows, cols) = resolve_triplet_shape(path, &t, shape)?;
            match convention {
                LabelConvention::Binary => {
                    let mut values = Array2::zeros((rows, cols));
                    for &(i, j, v) in &t.entries {
                        check_binary(0, v)?;
                        values[[i, j]] = v;
                    }
                    let mask = ObservationMask::from_coords(
                        rows,
                        cols,
                        t.entries.iter().map(|&(i, j, _)| (i, j)),
                    )?;
                    PartialLabels::new(values, mask)
                }
                LabelConvention::Signed => {
                    let dense = triplets_to_dense(path, &t, Some((rows, cols)))?;
                    dense.iter().try_for_each(|&v| check_binary(0, v))?;
                    binarize_signed(dense.view())
                }
            }
        }
        _ => {
            let dense = read_matrix(path, Some(format), None)?;
            if let Some(s) = shape {
                if dense.dim() != s {
                    return Err(Error::ingest(
                        path,
                        1,
                        format!(
                            "dimension mismatch: labels are {:?}, expected {s:?}",
                            dense.dim()
                        ),
                    ));
                }
            }
            for ((i, _), &v) in dense.indexed_iter() {
                // header is line 1, row i is line i + 2 for dense text
                check_binary(i + 2, v)?;
            }
            match convention {
                LabelConvention::Binary => PartialLabels::from_full(dense),
                LabelConvention::Signed => binarize_signed(dense.view()),
            }
        }
    }
}

/// Writes partial labels as triplet text with a `rows cols` header, listing
/// every observed entry (zeros included) in row-major order.
pub fn write_labels(path: &Path, labels: &PartialLabels) -> Result<()> {
    let mut out = format!("{} {}\n", labels.n(), labels.c());
    for &(i, j) in labels.mask().coords() {
        out.push_str(&format!("{i} {j} {}\n", labels.values()[[i, j]]));
    }
    write_atomic(path, out.as_bytes())
}

/// Inputs to one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    /// Visual descriptors of the training instances.
    pub features: FeatureMatrix,
    /// Low-dimensional descriptors used only for visual-neighbor search.
    pub low_dim_features: FeatureMatrix,
    /// Posterior scores over `s` source concepts (`n×s`), if available.
    pub concept_scores: Option<Array2<f64>>,
    /// Observed training labels.
    pub labels: PartialLabels,
    pub test_features: Option<FeatureMatrix>,
    /// Fully observed `n_test×c` test labels.
    pub test_labels: Option<Array2<f64>>,
}

impl DatasetBundle {
    pub fn validate(&self) -> Result<()> {
        let n = self.features.n();
        if self.low_dim_features.n() != n {
            return Err(Error::validation(format!(
                "low-dimensional features have {} rows, features have {n}",
                self.low_dim_features.n()
            )));
        }
        if self.labels.n() != n {
            return Err(Error::validation(format!(
                "labels have {} rows, features have {n}",
                self.labels.n()
            )));
        }
        if let Some(s) = &self.concept_scores {
            if s.nrows() != n {
                return Err(Error::validation(format!(
                    "concept scores have {} rows, features have {n}",
                    s.nrows()
                )));
            }
            if s.ncols() == 0 {
                return Err(Error::validation(
                    "concept scores must have at least one column",
                ));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(
                    "concept scores contain non-finite values",
                ));
            }
        }
        match (&self.test_features, &self.test_labels) {
            (Some(tf), Some(tl)) => {
                if tf.n() != tl.nrows() {
                    return Err(Error::validation(format!(
                        "test features have {} rows, test labels {}",
                        tf.n(),
                        tl.nrows()
                    )));
                }
                if tf.d() != self.features.d() {
                    return Err(Error::validation(format!(
                        "test features have {} columns, training features {}",
                        tf.d(),
                        self.features.d()
                    )));
                }
                if tl.ncols() != self.labels.c() {
                    return Err(Error::validation(format!(
                        "test labels have {} columns, training labels {}",
                        tl.ncols(),
                        self.labels.c()
                    )));
                }
                if tl.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::validation("test labels must be 0 or 1"));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::validation(
                    "test features and test labels must be given together",
                ))
            }
        }
        Ok(())
    }
}

/// File locations for [`load_dataset`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetPaths {
    pub features: PathBuf,
    /// Defaults to `features` when absent.
    pub low_dim_features: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub labels: PathBuf,
    pub test_features: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

/// Loads and validates a dataset. `format` overrides extension-based
/// detection for every file.
pub fn load_dataset(
    paths: &DatasetPaths,
    format: Option<MatrixFormat>,
    convention: LabelConvention,
) -> Result<DatasetBundle> {
    let features = FeatureMatrix::new(read_matrix(&paths.features, format, None)?)?;
    let n = features.n();
    let low_dim_features = match &paths.low_dim_features {
        Some(p) => FeatureMatrix::new(read_matrix(p, format, None)?)?,
        None => features.clone(),
    };
    let concept_scores = paths
        .scores
        .as_ref()
        .map(|p| read_matrix(p, format, None))
        .transpose()?;
    let test_labels = paths
        .test_labels
        .as_ref()
        .map(|p| read_matrix(p, format, None))
        .transpose()?;
    let label_cols = test_labels.as_ref().map(|t| t.ncols());
    let label_shape = label_cols.map(|c| (n, c));
    let labels = read_labels(&paths.labels, format, label_shape, convention)?;
    let test_features = paths
        .test_features
        .as_ref()
        .map(|p| read_matrix(p, format, None).and_then(FeatureMatrix::new))
        .transpose()?;
    let bundle = DatasetBundle {
        features,
        low_dim_features,
        concept_scores,
        labels,
        test_features,
        test_labels,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// How [`mask_labels`] chooses the observed entries of each column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskMode {
    /// `⌊ω·n/100⌋` rows per column, uniformly without replacement.
    #[default]
    PerColumnEntries,
    /// Stratified: `⌊ω·P_j/100⌋` of the positives and `⌊ω·N_j/100⌋` of the
    /// negatives of column `j`, each uniformly without replacement.
    PerColumnPositives,
}

impl FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-column-entries" => Ok(MaskMode::PerColumnEntries),
            "per-column-positives" => Ok(MaskMode::PerColumnPositives),
            other => Err(Error::validation(format!(
                "unknown mask mode '{other}' (expected per-column-entries or per-column-positives)"
            ))),
        }
    }
}

impl std::fmt::Display for MaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MaskMode::PerColumnEntries => "per-column-entries",
            MaskMode::PerColumnPositives => "per-column-positives",
        })
    }
}

fn observed_count(omega_percent: f64, total: usize) -> usize {
    // ω·total is exact for integer ω and moderate totals
    ((omega_percent * total as f64) / 100.0).floor() as usize
}

fn sample_sorted(rng: &mut ChaCha8Rng, pool: &[usize], amount: usize) -> Vec<usize> {
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, pool.len(), amount)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    picked.sort_unstable();
    picked
}

/// Simulates missing labels by revealing ω% of each column of `full`.
/// Deterministic given `seed`.
pub fn mask_labels(
    full: ArrayView2<'_, f64>,
    omega_percent: f64,
    mode: MaskMode,
    seed: u64,
) -> Result<PartialLabels> {
    if !(omega_percent > 0.0 && omega_percent <= 100.0) {
        return Err(Error::validation(format!(
            "observed rate must lie in (0,100], got {omega_percent}"
        )));
    }
    if let Some(((i, j), v)) = full.indexed_iter().find(|(_, &v)| v != 0.0 && v != 1.0) {
        return Err(Error::validation(format!(
            "label ({i},{j}) = {v} is not binary"
        )));
    }
    let (n, c) = full.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::new();
    let all_rows: Vec<usize> = (0..n).collect();
    for j in 0..c {
        let rows = match mode {
            MaskMode::PerColumnEntries => {
                let k = observed_count(omega_percent, n);
                if k == 0 {
                    return Err(Error::validation(format!(
                        "observed rate too low for n: {omega_percent}% of {n} rows rounds to 0"
                    )));
                }
                sample_sorted(&mut rng, &all_rows, k)
            }
            MaskMode::PerColumnPositives => {
                let (pos, neg): (Vec<usize>, Vec<usize>) =
                    all_rows.iter().partition(|&&i| full[[i, j]] == 1.0);
                let kp = observed_count(omega_percent, pos.len());
                let kn = observed_count(omega_percent, neg.len());
                if kp + kn == 0 {
                    return Err(Error::validation(format!(
                        "observed rate too low for n: column {j} would have no observed entries"
                    )));
                }
                let mut rows = sample_sorted(&mut rng, &pos, kp);
                rows.extend(sample_sorted(&mut rng, &neg, kn));
                rows
            }
        };
        coords.extend(rows.into_iter().map(|i| (i, j)));
    }
    let mask = ObservationMask::from_coords(n, c, coords)?;
    PartialLabels::observe(full, mask)
}
