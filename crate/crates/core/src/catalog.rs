//! Product inventory and the on-disk catalog bundle.
//!
//! A bundle named `<name>` is two files written side by side:
//!
//! * `<name>.grvec`: the magic `GREC`, a format version (u32 LE), the product
//!   count (u64 LE), the dimension (u32 LE), then the row-major f32 LE matrix.
//! * `<name>.grmeta.jsonl`: one JSON object per row, in the same order, with
//!   `id`, `attributes` and an optional `display_ref`.
//!
//! Prompt banks live in `<name>.grprompt.jsonl`, one `{prompt, vector}` object
//! per line.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{norm, EmbeddingVector, UNIT_NORM_TOL};

pub const MAGIC: &[u8; 4] = b"GREC";
pub const FORMAT_VERSION: u32 = 1;
/// magic + version + count + dim
pub const HEADER_LEN: usize = 4 + 4 + 8 + 4;

/// Vectors whose norm deviates from 1 by more than this are rejected on load.
pub const LOAD_NORM_TOL: f64 = 1e-3;

pub const VEC_EXT: &str = "grvec";
pub const META_EXT: &str = "grmeta.jsonl";
pub const PROMPT_EXT: &str = "grprompt.jsonl";
pub const ORACLE_EXT: &str = "oracle.json";

#[derive(Debug, Clone, PartialEq)]
pub struct ProductRecord {
    pub id: String,
    pub image_vec: EmbeddingVector,
    pub attributes: BTreeMap<String, String>,
    pub display_ref: Option<String>,
}

impl ProductRecord {
    pub fn new(id: impl Into<String>, image_vec: EmbeddingVector) -> Self {
        Self {
            id: id.into(),
            image_vec,
            attributes: BTreeMap::new(),
            display_ref: None,
        }
    }
}

/// An ordered, validated, immutable set of products sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    dim: usize,
    products: Vec<ProductRecord>,
}

impl Catalog {
    /// Validates the catalog invariants. Vectors whose norm is off by at most
    /// [`LOAD_NORM_TOL`] are re-normalized; exact-enough vectors are kept
    /// bit-for-bit.
    pub fn new(dim: usize, mut products: Vec<ProductRecord>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dim must be positive".into()));
        }
        if products.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        let mut seen = HashSet::with_capacity(products.len());
        for p in &mut products {
            if !seen.insert(p.id.clone()) {
                return Err(Error::DuplicateId(p.id.clone()));
            }
            if p.image_vec.dim() != dim {
                return Err(Error::dim(dim, p.image_vec.dim()));
            }
            let values = checked_unit(&p.id, p.image_vec.as_slice())?;
            if let Some(values) = values {
                p.image_vec = EmbeddingVector::new(values)?;
            }
        }
        Ok(Self { dim, products })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn products(&self) -> &[ProductRecord] {
        &self.products
    }

    pub fn get(&self, row: usize) -> Option<&ProductRecord> {
        self.products.get(row)
    }
}

/// Returns `Some(renormalized)` when the vector needed fixing, `None` when it
/// is already unit norm within [`UNIT_NORM_TOL`].
fn checked_unit(id: &str, values: &[f32]) -> Result<Option<Vec<f32>>> {
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteVector(id.to_string()));
    }
    let n = norm(values);
    let drift = (n - 1.0).abs();
    if drift <= UNIT_NORM_TOL {
        Ok(None)
    } else if drift <= LOAD_NORM_TOL {
        Ok(Some(
            values.iter().map(|&x| (x as f64 / n) as f32).collect(),
        ))
    } else {
        Err(Error::NotUnitNorm {
            id: id.to_string(),
            norm: n,
        })
    }
}

/// Strips a trailing `.grvec` so both `dir/name` and `dir/name.grvec` name
/// the same bundle.
pub fn bundle_base(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    match s.strip_suffix(&format!(".{VEC_EXT}")) {
        Some(base) => PathBuf::from(base),
        None => path.to_path_buf(),
    }
}

pub fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct MetaRow {
    id: String,
    #[serde(default)]
    attributes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    display_ref: Option<String>,
}

pub fn save_catalog(catalog: &Catalog, path: impl AsRef<Path>) -> Result<()> {
    let base = bundle_base(path.as_ref());
    let vec_path = with_ext(&base, VEC_EXT);
    let meta_path = with_ext(&base, META_EXT);

    let file = File::create(&vec_path).map_err(|e| Error::io(&vec_path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.extend_from_slice(&(catalog.len() as u64).to_le_bytes());
    header.extend_from_slice(&(catalog.dim() as u32).to_le_bytes());
    w.write_all(&header).map_err(|e| Error::io(&vec_path, e))?;
    for p in catalog.products() {
        for x in p.image_vec.as_slice() {
            w.write_all(&x.to_le_bytes())
                .map_err(|e| Error::io(&vec_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&vec_path, e))?;

    let file = File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut w = BufWriter::new(file);
    for p in catalog.products() {
        let row = MetaRow {
            id: p.id.clone(),
            attributes: p.attributes.clone(),
            display_ref: p.display_ref.clone(),
        };
        let line = serde_json::to_string(&row).expect("metadata row serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(&meta_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&meta_path, e))
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog> {
    let base = bundle_base(path.as_ref());
    let vec_path = with_ext(&base, VEC_EXT);
    let meta_path = with_ext(&base, META_EXT);

    let mut bytes = Vec::new();
    File::open(&vec_path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(&vec_path, e))?;
    let (count, dim, matrix) = parse_vec_block(&bytes)?;

    let file = File::open(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut rows = Vec::with_capacity(count);
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&meta_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: MetaRow = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedMetadata(format!("line {}: {e}", lineno + 1)))?;
        rows.push(row);
    }
    if rows.len() != count {
        return Err(Error::MalformedMetadata(format!(
            "{} metadata rows for {count} vectors",
            rows.len()
        )));
    }

    let products = rows
        .into_iter()
        .zip(matrix.chunks_exact(dim))
        .map(|(row, values)| {
            if values.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteVector(row.id));
            }
            Ok(ProductRecord {
                image_vec: EmbeddingVector::new(values.to_vec())?,
                id: row.id,
                attributes: row.attributes,
                display_ref: row.display_ref,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Catalog::new(dim, products)
}

fn parse_vec_block(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "file is {} bytes, header needs {HEADER_LEN}",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::MalformedHeader("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported format version {version}"
        )));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    if count == 0 {
        return Err(Error::EmptyCatalog);
    }
    if dim == 0 {
        return Err(Error::MalformedHeader("dim is zero".into()));
    }
    let body = &bytes[HEADER_LEN..];
    let row_bytes = count
        .checked_mul(dim)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| Error::MalformedHeader("count × dim overflows".into()))?;
    if body.len() != row_bytes {
        // A body that divides evenly into `count` rows means the rows have a
        // different width than the header claims.
        let per_row = count * 4;
        if body.len().is_multiple_of(per_row) {
            return Err(Error::dim(dim, body.len() / per_row));
        }
        return Err(Error::MalformedHeader(format!(
            "matrix is {} bytes, expected {row_bytes}",
            body.len()
        )));
    }
    let matrix = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((count, dim, matrix))
}

/// Encoded text prompts, keyed by prompt string.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptBank {
    dim: Option<usize>,
    entries: BTreeMap<String, EmbeddingVector>,
}

impl PromptBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prompt: impl Into<String>, vector: EmbeddingVector) -> Result<()> {
        let prompt = prompt.into();
        match self.dim {
            Some(d) if d != vector.dim() => return Err(Error::dim(d, vector.dim())),
            _ => self.dim = Some(vector.dim()),
        }
        let vector = match checked_unit(&prompt, vector.as_slice())? {
            Some(values) => EmbeddingVector::new(values)?,
            None => vector,
        };
        self.entries.insert(prompt, vector);
        Ok(())
    }

    pub fn get(&self, prompt: &str) -> Result<&EmbeddingVector> {
        self.entries
            .get(prompt)
            .ok_or_else(|| Error::UnknownPrompt(prompt.to_string()))
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prompts(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Fails unless the bank is empty or matches `dim`.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self.dim {
            Some(d) if d != dim => Err(Error::dim(dim, d)),
            _ => Ok(()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PromptRow {
    prompt: String,
    vector: Vec<f32>,
}

pub fn save_prompt_bank(bank: &PromptBank, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (prompt, vector) in bank.iter() {
        let row = PromptRow {
            prompt: prompt.to_string(),
            vector: vector.as_slice().to_vec(),
        };
        let line = serde_json::to_string(&row).expect("prompt row serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_prompt_bank(path: impl AsRef<Path>) -> Result<PromptBank> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bank = PromptBank::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: PromptRow = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedMetadata(format!("line {}: {e}", lineno + 1)))?;
        if row.vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteVector(row.prompt));
        }
        bank.insert(row.prompt, EmbeddingVector::new(row.vector)?)?;
    }
    Ok(bank)
}
