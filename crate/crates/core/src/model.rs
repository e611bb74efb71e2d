//! LightGCN embedding model: trainable base table, layer-mean readout and
//! its adjoint for gradient routing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    num_users: usize,
    num_items: usize,
    num_layers: usize,
    /// Rows `0..U` are users, rows `U..U+I` are items.
    base: Matrix,
}

impl EmbeddingModel {
    pub fn from_base(num_users: usize, num_items: usize, num_layers: usize, base: Matrix) -> Result<Self> {
        if base.rows() != num_users + num_items {
            return Err(Error::Dimension {
                context: "base table rows",
                expected: num_users + num_items,
                actual: base.rows(),
            });
        }
        if base.cols() == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        if !base.is_finite() {
            return Err(Error::invalid("base table has non-finite entries"));
        }
        Ok(EmbeddingModel {
            num_users,
            num_items,
            num_layers,
            base,
        })
    }

    /// Xavier-uniform initialization with `fan_in = fan_out = dim`, i.e.
    /// entries uniform on `[-sqrt(3/dim), sqrt(3/dim)]`.
    pub fn init_xavier(
        num_users: usize,
        num_items: usize,
        dim: usize,
        num_layers: usize,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        let bound = (3.0 / dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut base = Matrix::zeros(num_users + num_items, dim);
        for v in base.as_mut_slice() {
            *v = dist.sample(&mut rng);
        }
        Self::from_base(num_users, num_items, num_layers, base)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn dim(&self) -> usize {
        self.base.cols()
    }

    pub fn base(&self) -> &Matrix {
        &self.base
    }

    pub fn base_mut(&mut self) -> &mut Matrix {
        &mut self.base
    }

    pub fn user_row(&self, user: usize) -> usize {
        user
    }

    pub fn item_row(&self, item: usize) -> usize {
        self.num_users + item
    }

    /// `layer_0 = base`, `layer_{k+1} = Ã layer_k`, `final = mean(layer_0..=layer_K)`.
    pub fn forward(&self, adj: &NormalizedAdjacency, keep_cache: bool) -> Result<FinalEmbeddings> {
        check_graph(adj, self.num_users, self.num_items)?;
        let mut sum = self.base.clone();
        let mut layers = keep_cache.then(|| vec![self.base.clone()]);
        let mut current = self.base.clone();
        let mut next = Matrix::zeros(self.base.rows(), self.base.cols());
        for _ in 0..self.num_layers {
            adj.propagate_into(&current, &mut next)?;
            std::mem::swap(&mut current, &mut next);
            sum.add_scaled(1.0, &current);
            if let Some(layers) = layers.as_mut() {
                layers.push(current.clone());
            }
        }
        sum.scale(1.0 / (self.num_layers + 1) as f64);
        Ok(FinalEmbeddings {
            num_users: self.num_users,
            num_items: self.num_items,
            values: sum,
            layers,
        })
    }
}

fn check_graph(adj: &NormalizedAdjacency, num_users: usize, num_items: usize) -> Result<()> {
    if adj.num_users() != num_users || adj.num_items() != num_items {
        return Err(Error::Dimension {
            context: "graph node count",
            expected: num_users + num_items,
            actual: adj.node_count(),
        });
    }
    Ok(())
}

/// Gradient of a loss w.r.t. the base table given its gradient w.r.t. the
/// final embeddings. Ã is symmetric, so the adjoint of the layer mean is
/// the layer mean of the propagated gradient.
pub fn backward(grad_final: &Matrix, adj: &NormalizedAdjacency, num_layers: usize) -> Result<Matrix> {
    if grad_final.rows() != adj.node_count() {
        return Err(Error::Dimension {
            context: "gradient rows",
            expected: adj.node_count(),
            actual: grad_final.rows(),
        });
    }
    let mut sum = grad_final.clone();
    let mut current = grad_final.clone();
    let mut next = Matrix::zeros(grad_final.rows(), grad_final.cols());
    for _ in 0..num_layers {
        adj.propagate_into(&current, &mut next)?;
        std::mem::swap(&mut current, &mut next);
        sum.add_scaled(1.0, &current);
    }
    sum.scale(1.0 / (num_layers + 1) as f64);
    Ok(sum)
}

/// Propagated (layer-mean) embeddings used for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalEmbeddings {
    num_users: usize,
    num_items: usize,
    values: Matrix,
    layers: Option<Vec<Matrix>>,
}

impl FinalEmbeddings {
    /// Wraps a `(U+I) x d` table, e.g. one read from an embedding file.
    pub fn from_table(num_users: usize, num_items: usize, values: Matrix) -> Result<Self> {
        if values.rows() != num_users + num_items {
            return Err(Error::Dimension {
                context: "embedding table rows",
                expected: num_users + num_items,
                actual: values.rows(),
            });
        }
        Ok(FinalEmbeddings {
            num_users,
            num_items,
            values,
            layers: None,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn user(&self, user: usize) -> &[f64] {
        self.values.row(user)
    }

    pub fn item(&self, item: usize) -> &[f64] {
        self.values.row(self.num_users + item)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn layers(&self) -> Option<&[Matrix]> {
        self.layers.as_deref()
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }
}

const MAGIC: &str = "TTEN-EMB";
const FORMAT_VERSION: u32 = 1;

/// Table read back from an embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub num_users: usize,
    pub num_items: usize,
    pub values: Matrix,
}

/// Renders the embedding file: header `TTEN-EMB 1 <U> <I> <d>`, then one
/// `<row> <v_1> ... <v_d>` line per row with 9 significant digits.
pub fn render_embeddings(values: &Matrix, num_users: usize, num_items: usize) -> Result<String> {
    if values.rows() != num_users + num_items {
        return Err(Error::Dimension {
            context: "embedding table rows",
            expected: num_users + num_items,
            actual: values.rows(),
        });
    }
    let mut out = String::with_capacity(values.rows() * (values.cols() * 16 + 8) + 32);
    writeln!(out, "{MAGIC} {FORMAT_VERSION} {num_users} {num_items} {}", values.cols()).unwrap();
    for r in 0..values.rows() {
        write!(out, "{r}").unwrap();
        for v in values.row(r) {
            write!(out, " {v:.8e}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_embeddings(values: &Matrix, num_users: usize, num_items: usize, path: &Path) -> Result<()> {
    let text = render_embeddings(values, num_users, num_items)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, path)
}

pub fn parse_embeddings(text: &str, path: &Path) -> Result<EmbeddingTable> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != MAGIC {
        return Err(err(1, format!("expected `{MAGIC} {FORMAT_VERSION} <users> <items> <dim>`")));
    }
    if fields[1] != FORMAT_VERSION.to_string() {
        return Err(err(1, format!("unsupported format version {}", fields[1])));
    }
    let parse_count = |s: &str| s.parse::<usize>().map_err(|_| err(1, format!("bad count {s:?}")));
    let num_users = parse_count(fields[2])?;
    let num_items = parse_count(fields[3])?;
    let dim = parse_count(fields[4])?;
    let rows = num_users + num_items;

    let mut data = Vec::with_capacity(rows * dim);
    let mut seen = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let row: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| err(line_no, "missing row index".into()))?;
        if row != seen {
            return Err(err(line_no, format!("expected row {seen}, found row {row}")));
        }
        let before = data.len();
        for t in toks {
            let v: f64 = t
                .parse()
                .map_err(|_| err(line_no, format!("row {row}: bad value {t:?}")))?;
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(err(
                line_no,
                format!("row {row} has {} values, header says {dim}", data.len() - before),
            ));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(err(
            text.lines().count(),
            format!("expected {rows} rows, found {seen}"),
        ));
    }
    Ok(EmbeddingTable {
        num_users,
        num_items,
        values: Matrix::from_vec(rows, dim, data)?,
    })
}
