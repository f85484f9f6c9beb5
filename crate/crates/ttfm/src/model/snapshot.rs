//! Plain-text parameter snapshots.
//!
//! A snapshot names the model kind, its dimensions, the observable category
//! columns, and one array section per parameter family:
//!
//! ```text
//! ttfm-snapshot v1
//! kind ttfm
//!
//! [dims]
//! n_users 2
//! n_restaurants 3
//! ...
//!
//! [categories] 2
//! bar
//! thai
//!
//! [popularity] 3
//! 0.25 -1 3e-7
//!
//! [user_pref] 2 4
//! <4 values>
//! <4 values>
//! ...
//! ```
//!
//! One-dimensional sections carry their length and a single value line;
//! two-dimensional sections carry `rows cols` and one line per row. An MNL
//! snapshot has only `obs_dim` under `[dims]` and the sections `[weights]`
//! and `[dist_coef]`. A posterior snapshot appends a `<family>.scale`
//! section per family holding the variational scales on the raw
//! (pre-softplus) axis — the stored numbers, not σ, so that round-trips
//! stay exact.
//!
//! Values are written with Rust's shortest round-trip float formatting and
//! parsed back to the identical bits; write → read → write reproduces the
//! file byte for byte. Non-finite values are rejected on both sides, and
//! masked weight entries (structural zeros) must be exactly zero in every
//! section that contains them.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use super::mask::block_mask;
use super::mnl::MnlParams;
use super::observables::{ObsLayout, N_PRICE_LEVELS, N_RATING_COLS};
use super::params::{LatentParams, ModelDims};
use super::FittedModel;
use crate::{Error, Result};

pub const SNAPSHOT_HEADER: &str = "ttfm-snapshot v1";

/// Posterior scales shaped like the parameter families they belong to.
///
/// Entries live on the raw (pre-softplus) axis; masked weight entries are
/// placeholders fixed at zero. The variant must match the model kind.
#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotScales {
    Ttfm(LatentParams),
    Mnl(MnlParams),
}

/// A fitted model as persisted: parameters, the observable category columns
/// the fit assumed, and optionally the posterior scale sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub model: FittedModel,
    /// Category labels in observable column order (ascending). The roster a
    /// snapshot is evaluated against must reproduce exactly these columns.
    pub categories: Vec<String>,
    pub scales: Option<SnapshotScales>,
}

impl Snapshot {
    /// The observable column layout this snapshot was fitted against.
    pub fn obs_layout(&self) -> ObsLayout {
        ObsLayout::standard(self.categories.clone())
    }
}

/// Renders a snapshot to text. Fails on non-finite values, nonzero masked
/// weight entries, shape mismatches between scales and parameters, and
/// category lists that are not strictly ascending.
pub fn write_snapshot(snap: &Snapshot) -> Result<String> {
    validate(snap)?;
    let mut out = String::new();
    let w = &mut out;
    let push = |w: &mut String, s: &str| w.push_str(s);
    push(w, SNAPSHOT_HEADER);
    push(w, "\n");
    let _ = writeln!(w, "kind {}", snap.model.kind());

    match &snap.model {
        FittedModel::Ttfm(p) => {
            let d = p.dims();
            push(w, "\n[dims]\n");
            let _ = writeln!(w, "n_users {}", d.n_users);
            let _ = writeln!(w, "n_restaurants {}", d.n_restaurants);
            let _ = writeln!(w, "n_weeks {}", d.n_weeks);
            let _ = writeln!(w, "pref_dim {}", d.pref_dim);
            let _ = writeln!(w, "travel_dim {}", d.travel_dim);
            let _ = writeln!(w, "season_dim {}", d.season_dim);
            let _ = writeln!(w, "obs_dim {}", d.obs_dim);
        }
        FittedModel::Mnl(p) => {
            push(w, "\n[dims]\n");
            let _ = writeln!(w, "obs_dim {}", p.weights.len());
        }
    }

    let _ = writeln!(w, "\n[categories] {}", snap.categories.len());
    for c in &snap.categories {
        let _ = writeln!(w, "{c}");
    }

    match &snap.model {
        FittedModel::Ttfm(p) => write_ttfm_families(w, p, "")?,
        FittedModel::Mnl(p) => write_mnl_families(w, p, "")?,
    }
    match &snap.scales {
        Some(SnapshotScales::Ttfm(s)) => write_ttfm_families(w, s, ".scale")?,
        Some(SnapshotScales::Mnl(s)) => write_mnl_families(w, s, ".scale")?,
        None => {}
    }
    Ok(out)
}

/// Parses snapshot text, validating dimensions, masked zeros, finiteness,
/// and the exact section order [`write_snapshot`] produces.
pub fn read_snapshot(text: &str) -> Result<Snapshot> {
    let mut p = Parser { lines: text.lines().collect(), pos: 0 };

    let header = p.expect_line("version header")?;
    if header != SNAPSHOT_HEADER {
        return Err(p.err(format!("expected header '{SNAPSHOT_HEADER}', found '{header}'")));
    }
    let kind_line = p.expect_line("kind line")?;
    let kind = kind_line
        .strip_prefix("kind ")
        .ok_or_else(|| p.err(format!("expected 'kind ttfm' or 'kind mnl', found '{kind_line}'")))?
        .to_string();

    p.expect_header_exact("[dims]")?;
    let snap = match kind.as_str() {
        "ttfm" => read_ttfm(&mut p)?,
        "mnl" => read_mnl(&mut p)?,
        other => return Err(p.err(format!("unknown model kind '{other}'"))),
    };
    p.skip_blank();
    if let Some(line) = p.peek() {
        return Err(p.err(format!("trailing content '{line}'")));
    }
    validate(&snap)?;
    Ok(snap)
}

fn read_ttfm(p: &mut Parser) -> Result<Snapshot> {
    let dims = ModelDims {
        n_users: p.dim_line("n_users")?,
        n_restaurants: p.dim_line("n_restaurants")?,
        n_weeks: p.dim_line("n_weeks")?,
        pref_dim: p.dim_line("pref_dim")?,
        travel_dim: p.dim_line("travel_dim")?,
        season_dim: p.dim_line("season_dim")?,
        obs_dim: p.dim_line("obs_dim")?,
    };
    dims.validate().map_err(|e| Error::data(format!("snapshot [dims]: {e}")))?;
    let categories = read_categories(p, dims.obs_dim)?;
    let params = read_ttfm_families(p, &dims, "")?;
    let scales = if p.at_end() {
        None
    } else {
        Some(SnapshotScales::Ttfm(read_ttfm_families(p, &dims, ".scale")?))
    };
    Ok(Snapshot { model: FittedModel::Ttfm(params), categories, scales })
}

fn read_mnl(p: &mut Parser) -> Result<Snapshot> {
    let obs_dim = p.dim_line("obs_dim")?;
    if obs_dim == 0 {
        return Err(Error::data("snapshot [dims]: obs_dim must be positive"));
    }
    let categories = read_categories(p, obs_dim)?;
    let params = read_mnl_families(p, obs_dim, "")?;
    let scales = if p.at_end() {
        None
    } else {
        Some(SnapshotScales::Mnl(read_mnl_families(p, obs_dim, ".scale")?))
    };
    Ok(Snapshot { model: FittedModel::Mnl(params), categories, scales })
}

fn read_categories(p: &mut Parser, obs_dim: usize) -> Result<Vec<String>> {
    let n = p.expect_1d_header("categories")?;
    let mut categories = Vec::with_capacity(n);
    for _ in 0..n {
        let line = p.expect_line("category label")?;
        if line.is_empty() || line.starts_with('[') {
            return Err(p.err(format!("bad category label '{line}'")));
        }
        categories.push(line.to_string());
    }
    if categories.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::data("snapshot [categories]: labels must be strictly ascending"));
    }
    let expect = N_RATING_COLS + categories.len() + N_PRICE_LEVELS;
    if obs_dim != expect {
        return Err(Error::data(format!(
            "snapshot: obs_dim {obs_dim} does not match {} categories (expected {expect})",
            categories.len()
        )));
    }
    Ok(categories)
}

fn write_ttfm_families(w: &mut String, p: &LatentParams, suffix: &str) -> Result<()> {
    write_1d(w, "popularity", suffix, p.popularity.iter())?;
    for (name, a) in ttfm_matrices(p) {
        write_2d(w, name, suffix, a)?;
    }
    Ok(())
}

fn read_ttfm_families(p: &mut Parser, dims: &ModelDims, suffix: &str) -> Result<LatentParams> {
    let mut out = LatentParams::zeros(dims);
    out.popularity = Array1::from_vec(p.read_1d("popularity", suffix, dims.n_restaurants)?);
    for (name, a) in ttfm_matrices_mut(&mut out) {
        *a = p.read_2d(name, suffix, a.nrows(), a.ncols())?;
    }
    Ok(out)
}

fn ttfm_matrices(p: &LatentParams) -> [(&'static str, &Array2<f64>); 8] {
    [
        ("user_pref", &p.user_pref),
        ("item_attr", &p.item_attr),
        ("user_travel", &p.user_travel),
        ("item_travel", &p.item_travel),
        ("item_season", &p.item_season),
        ("week_season", &p.week_season),
        ("attr_weights", &p.attr_weights),
        ("travel_weights", &p.travel_weights),
    ]
}

fn ttfm_matrices_mut(p: &mut LatentParams) -> [(&'static str, &mut Array2<f64>); 8] {
    [
        ("user_pref", &mut p.user_pref),
        ("item_attr", &mut p.item_attr),
        ("user_travel", &mut p.user_travel),
        ("item_travel", &mut p.item_travel),
        ("item_season", &mut p.item_season),
        ("week_season", &mut p.week_season),
        ("attr_weights", &mut p.attr_weights),
        ("travel_weights", &mut p.travel_weights),
    ]
}

fn write_mnl_families(w: &mut String, p: &MnlParams, suffix: &str) -> Result<()> {
    write_1d(w, "weights", suffix, p.weights.iter())?;
    write_1d(w, "dist_coef", suffix, std::iter::once(&p.dist_coef))
}

fn read_mnl_families(p: &mut Parser, obs_dim: usize, suffix: &str) -> Result<MnlParams> {
    let weights = Array1::from_vec(p.read_1d("weights", suffix, obs_dim)?);
    let dist_coef = p.read_1d("dist_coef", suffix, 1)?[0];
    Ok(MnlParams { weights, dist_coef })
}

fn write_1d<'a>(
    w: &mut String,
    name: &str,
    suffix: &str,
    vals: impl ExactSizeIterator<Item = &'a f64>,
) -> Result<()> {
    let _ = writeln!(w, "\n[{name}{suffix}] {}", vals.len());
    write_row(w, name, vals)
}

fn write_2d(w: &mut String, name: &str, suffix: &str, a: &Array2<f64>) -> Result<()> {
    let _ = writeln!(w, "\n[{name}{suffix}] {} {}", a.nrows(), a.ncols());
    for row in a.rows() {
        write_row(w, name, row.iter())?;
    }
    Ok(())
}

fn write_row<'a>(w: &mut String, name: &str, vals: impl Iterator<Item = &'a f64>) -> Result<()> {
    for (k, v) in vals.enumerate() {
        if !v.is_finite() {
            return Err(Error::invalid(format!("non-finite value {v} in snapshot family {name}")));
        }
        if k > 0 {
            w.push(' ');
        }
        let _ = write!(w, "{v}");
    }
    w.push('\n');
    Ok(())
}

struct Parser<'s> {
    lines: Vec<&'s str>,
    pos: usize,
}

impl<'s> Parser<'s> {
    fn err(&self, msg: String) -> Error {
        Error::data(format!("snapshot line {}: {msg}", self.pos))
    }

    fn peek(&self) -> Option<&'s str> {
        self.lines.get(self.pos).copied()
    }

    fn expect_line(&mut self, what: &str) -> Result<&'s str> {
        match self.lines.get(self.pos) {
            Some(line) => {
                self.pos += 1;
                Ok(line)
            }
            None => Err(Error::data(format!("snapshot ended early, expected {what}"))),
        }
    }

    fn skip_blank(&mut self) {
        while self.peek() == Some("") {
            self.pos += 1;
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_blank();
        self.peek().is_none()
    }

    fn expect_header_exact(&mut self, header: &str) -> Result<()> {
        self.skip_blank();
        let line = self.expect_line(header)?;
        if line != header {
            return Err(self.err(format!("expected '{header}', found '{line}'")));
        }
        Ok(())
    }

    /// `key value` line inside [dims].
    fn dim_line(&mut self, key: &str) -> Result<usize> {
        let line = self.expect_line(key)?;
        let rest = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected '{key} <n>', found '{line}'")))?;
        rest.parse().map_err(|_| self.err(format!("bad {key} value '{rest}'")))
    }

    fn section_header(&mut self, name: &str, suffix: &str, want_dims: usize) -> Result<Vec<usize>> {
        self.skip_blank();
        let line = self.expect_line("section header")?;
        let full = format!("[{name}{suffix}]");
        let mut parts = line.split(' ');
        if parts.next() != Some(full.as_str()) {
            return Err(self.err(format!("expected section '{full}', found '{line}'")));
        }
        let sizes: Vec<usize> = parts
            .map(|s| s.parse().map_err(|_| self.err(format!("bad size in '{line}'"))))
            .collect::<Result<_>>()?;
        if sizes.len() != want_dims {
            return Err(self.err(format!(
                "section '{full}' has {} sizes, expected {want_dims}",
                sizes.len()
            )));
        }
        Ok(sizes)
    }

    fn expect_1d_header(&mut self, name: &str) -> Result<usize> {
        Ok(self.section_header(name, "", 1)?[0])
    }

    fn read_1d(&mut self, name: &str, suffix: &str, len: usize) -> Result<Vec<f64>> {
        let sizes = self.section_header(name, suffix, 1)?;
        if sizes[0] != len {
            return Err(self.err(format!(
                "section [{name}{suffix}] has length {}, dims say {len}",
                sizes[0]
            )));
        }
        self.value_line(name, len)
    }

    fn read_2d(&mut self, name: &str, suffix: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let sizes = self.section_header(name, suffix, 2)?;
        if sizes != [rows, cols] {
            return Err(self.err(format!(
                "section [{name}{suffix}] is {}x{}, dims say {rows}x{cols}",
                sizes[0], sizes[1]
            )));
        }
        let mut flat = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            flat.extend(self.value_line(name, cols)?);
        }
        Array2::from_shape_vec((rows, cols), flat)
            .map_err(|e| Error::data(format!("snapshot [{name}{suffix}]: {e}")))
    }

    fn value_line(&mut self, name: &str, expect: usize) -> Result<Vec<f64>> {
        let line = self.expect_line("value line")?;
        let mut vals = Vec::with_capacity(expect);
        for tok in line.split_whitespace() {
            let v: f64 =
                tok.parse().map_err(|_| self.err(format!("bad value '{tok}' in [{name}]")))?;
            if !v.is_finite() {
                return Err(self.err(format!("non-finite value '{tok}' in [{name}]")));
            }
            vals.push(v);
        }
        if vals.len() != expect {
            return Err(self.err(format!(
                "[{name}] row has {} values, expected {expect}",
                vals.len()
            )));
        }
        Ok(vals)
    }
}

fn validate(snap: &Snapshot) -> Result<()> {
    if snap.categories.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("snapshot categories must be strictly ascending"));
    }
    if snap.categories.iter().any(|c| c.is_empty() || c.contains('\n') || c.starts_with('[')) {
        return Err(Error::invalid("snapshot categories must be nonempty plain labels"));
    }
    let layout = ObsLayout::standard(snap.categories.clone());
    match &snap.model {
        FittedModel::Ttfm(params) => {
            let dims = params.dims();
            if dims.obs_dim != layout.n_cols() {
                return Err(Error::invalid(format!(
                    "obs_dim {} does not match the {}-category column layout ({})",
                    dims.obs_dim,
                    snap.categories.len(),
                    layout.n_cols()
                )));
            }
            check_masked_zeros(params, &layout, "")?;
            match &snap.scales {
                Some(SnapshotScales::Ttfm(s)) => {
                    s.check_dims(&dims)?;
                    check_masked_zeros(s, &layout, ".scale")?;
                }
                Some(SnapshotScales::Mnl(_)) => {
                    return Err(Error::invalid("scale sections do not match the model kind"));
                }
                None => {}
            }
        }
        FittedModel::Mnl(params) => {
            if params.weights.len() != layout.n_cols() {
                return Err(Error::invalid(format!(
                    "{} weights do not match the {}-category column layout ({})",
                    params.weights.len(),
                    snap.categories.len(),
                    layout.n_cols()
                )));
            }
            match &snap.scales {
                Some(SnapshotScales::Mnl(s)) if s.weights.len() == params.weights.len() => {}
                Some(SnapshotScales::Mnl(_)) => {
                    return Err(Error::invalid("scale sections do not match the weight shape"));
                }
                Some(SnapshotScales::Ttfm(_)) => {
                    return Err(Error::invalid("scale sections do not match the model kind"));
                }
                None => {}
            }
        }
    }
    Ok(())
}

fn check_masked_zeros(params: &LatentParams, layout: &ObsLayout, suffix: &str) -> Result<()> {
    for (name, k, w) in [
        ("attr_weights", params.user_pref.ncols(), &params.attr_weights),
        ("travel_weights", params.user_travel.ncols(), &params.travel_weights),
    ] {
        let mask = block_mask(k, layout)?;
        for ((r, c), &m) in mask.indexed_iter() {
            if m == 0.0 && w[(r, c)] != 0.0 {
                return Err(Error::data(format!(
                    "snapshot [{name}{suffix}]: masked entry ({r}, {c}) is {} but must be exactly zero",
                    w[(r, c)]
                )));
            }
        }
    }
    Ok(())
}
