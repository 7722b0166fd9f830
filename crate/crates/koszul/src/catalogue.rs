//! A catalogue of worked objects over the group blocks and the affine
//! line, the frozen tables that describe them, and the checks replaying
//! those tables through the duality engine.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::algebra_presentations::{
    bga_block, bgm_block, poly_term, AlgebraKind, Monomial, Poly,
};
use crate::dg_modules::{DGModule, Side};
use crate::exact_bigraded_linalg::{cohomology_dims, Rational, Trigrade, Window};
use crate::koszul_engine::{
    block_roundtrip_counit, cone_certified_acyclic, kappa_filtered, un_block, EngineError,
};

fn q(n: i64) -> Rational {
    Rational::from_integer(n.into())
}

// ------------------------------------------------------------- fixed tables

/// Window annotation of a fixture section; the degree range is optional
/// because purely relative tables omit it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixtureWindow {
    pub d: Option<(i64, i64)>,
    pub w: (i64, i64),
    pub a: i64,
}

impl FixtureWindow {
    pub fn window(&self) -> Option<Window> {
        self.d.map(|(lo, hi)| Window::new(lo, hi, self.w.0, self.w.1, self.a))
    }
}

/// One section of a fixed table: everything between two comment headers.
#[derive(Clone, Debug, Default)]
pub struct FixtureSection {
    pub header: String,
    pub window: Option<FixtureWindow>,
    /// piece lines: grade, dimension, and whether the piece is certified
    pub pieces: BTreeMap<Trigrade, (usize, bool)>,
    /// chain lines: raw dimensions before cohomology
    pub chains: BTreeMap<Trigrade, usize>,
    /// tower lines: degree, base weight, rank
    pub towers: Vec<(i64, i64, usize)>,
    /// specialization lines: degree and dimension at parameter one
    pub un: BTreeMap<i64, usize>,
    /// endomorphism lines of the twisted sheaf table
    pub end: BTreeMap<Trigrade, usize>,
    /// truncation lines: cutoff, degree, auxiliary grade, dimension
    pub sigma: Vec<(i64, i64, i64, usize)>,
    /// any remaining non-empty line, kept verbatim
    pub other: Vec<String>,
}

fn kv(line: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for part in line.split_whitespace() {
        if let Some((k, v)) = part.split_once('=') {
            out.insert(k.to_string(), v.to_string());
        }
    }
    out
}

fn kvi(m: &BTreeMap<String, String>, k: &str) -> Option<i64> {
    m.get(k)?.parse().ok()
}

fn parse_range(s: &str) -> Option<(i64, i64)> {
    let (lo, hi) = s.split_once("..")?;
    Some((lo.parse().ok()?, hi.parse().ok()?))
}

/// Parse a fixed table into sections, splitting at comment headers.  The
/// first section keeps an empty header when the file starts with lines.
pub fn parse_fixture_text(text: &str) -> Vec<FixtureSection> {
    let mut out: Vec<FixtureSection> = vec![];
    let mut cur = FixtureSection::default();
    let mut any = false;
    for line in text.lines() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            if any {
                out.push(std::mem::take(&mut cur));
            }
            cur.header = h.trim().to_string();
            any = true;
            continue;
        }
        any = true;
        let m = kv(line);
        let first = line.split_whitespace().next().unwrap_or("");
        match first {
            "window" => {
                let d = m.get("d").and_then(|s| parse_range(s));
                let w = m.get("w").and_then(|s| parse_range(s));
                let a = kvi(&m, "a");
                if let (Some(w), Some(a)) = (w, a) {
                    cur.window = Some(FixtureWindow { d, w, a });
                    continue;
                }
            }
            "piece" => {
                if let (Some(d), Some(w), Some(dim)) = (kvi(&m, "d"), kvi(&m, "w"), kvi(&m, "dim"))
                {
                    let a = kvi(&m, "a").unwrap_or(0);
                    let cert = m.get("status").map(|s| s == "certified").unwrap_or(true);
                    cur.pieces.insert(Trigrade::new(d, w, a), (dim as usize, cert));
                    continue;
                }
            }
            "chain" => {
                if let (Some(d), Some(w), Some(dim)) = (kvi(&m, "d"), kvi(&m, "w"), kvi(&m, "dim"))
                {
                    let a = kvi(&m, "a").unwrap_or(0);
                    cur.chains.insert(Trigrade::new(d, w, a), dim as usize);
                    continue;
                }
            }
            "tower" => {
                if let (Some(d), Some(wb), Some(dim)) =
                    (kvi(&m, "d"), kvi(&m, "wbase"), kvi(&m, "dim"))
                {
                    cur.towers.push((d, wb, dim as usize));
                    continue;
                }
            }
            "un" => {
                if let (Some(d), Some(dim)) = (kvi(&m, "d"), kvi(&m, "dim")) {
                    cur.un.insert(d, dim as usize);
                    continue;
                }
            }
            "end" => {
                if let (Some(d), Some(w), Some(a), Some(dim)) =
                    (kvi(&m, "d"), kvi(&m, "w"), kvi(&m, "a"), kvi(&m, "dim"))
                {
                    cur.end.insert(Trigrade::new(d, w, a), dim as usize);
                    continue;
                }
            }
            "sigma" => {
                if let (Some(k), Some(i), Some(a), Some(dim)) =
                    (kvi(&m, "k"), kvi(&m, "i"), kvi(&m, "a"), kvi(&m, "dim"))
                {
                    cur.sigma.push((k, i, a, dim as usize));
                    continue;
                }
            }
            _ => {}
        }
        cur.other.push(line.to_string());
    }
    if any {
        out.push(cur);
    }
    out
}

/// Directory holding the fixed tables: an explicit override, the
/// KOSZUL_FIXTURES environment variable, or the in-tree default.
pub fn fixtures_dir(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os("KOSZUL_FIXTURES") {
        return PathBuf::from(p);
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Load and parse one fixed table by stem name.
pub fn load_fixture(dir: Option<&Path>, stem: &str) -> Result<Vec<FixtureSection>, EngineError> {
    let path = fixtures_dir(dir).join(format!("{}.txt", stem));
    let text = std::fs::read_to_string(&path).map_err(|e| {
        EngineError::Unsupported(format!("cannot read table {}: {}", path.display(), e))
    })?;
    Ok(parse_fixture_text(&text))
}

// -------------------------------------------------------- catalogue entries

/// A worked object: its canonical name, the stem of its frozen table when
/// one exists, and the module itself.
pub struct CatalogueEntry {
    pub name: String,
    pub fixture: Option<String>,
    pub module: DGModule,
}

/// Names understood by the catalogue, with their parameter shapes.
pub fn catalogue_names() -> Vec<&'static str> {
    vec![
        "bgm.character n=<int>",
        "bgm.skyscraper n=<int>",
        "bgm.infinitesimal m=<int>",
        "bgm.omega_formal",
        "bgm.infinitesimal_s1 m=<int>",
        "bgm.omega_s1",
        "bga.skyscraper",
        "bga.omega",
        "zero",
    ]
}

const CAP: usize = 30;

fn entry_params(rest: &str) -> Result<BTreeMap<String, i64>, EngineError> {
    let mut out = BTreeMap::new();
    for part in rest.split_whitespace() {
        let Some((k, v)) = part.split_once('=') else {
            return Err(EngineError::Unsupported(format!(
                "catalogue parameter {} is not key=value",
                part
            )));
        };
        let v: i64 = v.parse().map_err(|_| {
            EngineError::Unsupported(format!("catalogue parameter {} is not an integer", part))
        })?;
        out.insert(k.to_string(), v);
    }
    Ok(out)
}

fn need(params: &BTreeMap<String, i64>, k: &str, name: &str) -> Result<i64, EngineError> {
    params.get(k).copied().ok_or_else(|| {
        EngineError::Unsupported(format!("catalogue entry {} needs the parameter {}", name, k))
    })
}

fn character_module(n: i64) -> DGModule {
    DGModule::new(
        &format!("character weight {}", n),
        Arc::new(bgm_block(n)),
        Side::Left,
        vec![("one".into(), Trigrade::new(0, n, 0))],
        vec![],
    )
}

/// Two-row free resolution of the torus skyscraper, truncated at the cap:
/// top row in degree zero, relations row in degree minus one, the
/// coordinate shifting along both rows.
fn skyscraper_module(n: i64) -> DGModule {
    let mm = CAP + 1;
    let mut gens = vec![];
    for j in 0..mm {
        gens.push((format!("e0x{}", j), Trigrade::new(0, n - j as i64, 0)));
    }
    for j in 0..mm {
        gens.push((format!("e1x{}", j), Trigrade::new(-1, n - 1 - j as i64, 0)));
    }
    let mut m = DGModule::new(
        &format!("skyscraper resolution weight {}", n),
        Arc::new(bgm_block(n)),
        Side::Left,
        gens,
        vec![],
    );
    let e0 = |j: usize| j;
    let e1 = |j: usize| mm + j;
    for j in 0..mm {
        if j + 1 < mm {
            m.differential.insert((e0(j + 1), e1(j)), poly_term(vec![], q(1)));
            m.actions.entry(0).or_default().insert((e0(j + 1), e0(j)), poly_term(vec![], q(1)));
            m.actions.entry(0).or_default().insert((e1(j + 1), e1(j)), poly_term(vec![], q(1)));
        }
        if n != 0 {
            m.actions.entry(1).or_default().insert((e1(j), e0(j)), poly_term(vec![], q(n)));
        }
    }
    m
}

/// Functions on the infinitesimal thickening of order m: weights zero
/// through m, the coordinate lowering the weight.
fn infinitesimal_module(m_ord: usize) -> DGModule {
    let n = m_ord + 1;
    let gens = (0..n)
        .map(|w| (format!("v{}", w), Trigrade::new(0, w as i64, 0)))
        .collect();
    let mut m = DGModule::new(
        &format!("infinitesimal order {}", m_ord),
        Arc::new(bgm_block(0)),
        Side::Left,
        gens,
        vec![],
    );
    for w in 1..n {
        m.actions.entry(0).or_default().insert((w - 1, w), poly_term(vec![], q(1)));
    }
    m
}

/// Formal dualizing object: classes of negative coordinate powers, the
/// coordinate lowering the pole order, truncated at the cap.
fn omega_formal_module() -> DGModule {
    let gens = (1..=CAP)
        .map(|j| (format!("p{}", j), Trigrade::new(0, j as i64, 0)))
        .collect();
    let mut m = DGModule::new(
        "formal dualizing object",
        Arc::new(bgm_block(0)),
        Side::Left,
        gens,
        vec![],
    );
    for j in 2..=CAP {
        m.actions.entry(0).or_default().insert((j - 2, j - 1), poly_term(vec![], q(1)));
    }
    m
}

/// Circle variant of the infinitesimal thickening: each class doubled by
/// an odd partner one degree and one weight down, the odd operator pairing
/// them.
fn infinitesimal_s1_module(m_ord: usize) -> DGModule {
    let n = m_ord + 1;
    let mut gens = vec![];
    for w in 0..n {
        gens.push((format!("v{}", w), Trigrade::new(0, w as i64, 0)));
    }
    for w in 0..n {
        gens.push((format!("dv{}", w), Trigrade::new(-1, w as i64 - 1, 0)));
    }
    let mut m = DGModule::new(
        &format!("circle infinitesimal order {}", m_ord),
        Arc::new(bgm_block(0)),
        Side::Left,
        gens,
        vec![],
    );
    for w in 1..n {
        m.actions.entry(0).or_default().insert((w - 1, w), poly_term(vec![], q(1)));
        m.actions.entry(0).or_default().insert((n + w - 1, n + w), poly_term(vec![], q(1)));
    }
    for w in 0..n {
        m.actions.entry(1).or_default().insert((n + w, w), poly_term(vec![], q(1)));
    }
    m
}

/// Circle variant of the formal dualizing object.
fn omega_s1_module() -> DGModule {
    let mut gens = vec![];
    for j in 1..=CAP {
        gens.push((format!("p{}", j), Trigrade::new(0, j as i64, 0)));
    }
    for j in 1..=CAP {
        gens.push((format!("dp{}", j), Trigrade::new(-1, j as i64 - 1, 0)));
    }
    let mut m = DGModule::new(
        "circle formal dualizing object",
        Arc::new(bgm_block(0)),
        Side::Left,
        gens,
        vec![],
    );
    for j in 2..=CAP {
        m.actions.entry(0).or_default().insert((j - 2, j - 1), poly_term(vec![], q(1)));
        m.actions.entry(0).or_default().insert((CAP + j - 2, CAP + j - 1), poly_term(vec![], q(1)));
    }
    for j in 1..=CAP {
        m.actions.entry(1).or_default().insert((CAP + j - 1, j - 1), poly_term(vec![], q(1)));
    }
    m
}

fn bga_skyscraper_module() -> DGModule {
    DGModule::new(
        "additive skyscraper",
        Arc::new(bga_block()),
        Side::Left,
        vec![("one".into(), Trigrade::new(0, 0, 0))],
        vec![],
    )
}

/// Additive dualizing object: coordinate powers in negative weight, the
/// coordinate raising the power, truncated at the cap.
fn bga_omega_module() -> DGModule {
    let gens = (0..=CAP)
        .map(|a| (format!("x{}", a), Trigrade::new(0, -(a as i64), 0)))
        .collect();
    let mut m = DGModule::new(
        "additive dualizing object",
        Arc::new(bga_block()),
        Side::Left,
        gens,
        vec![],
    );
    for a in 0..CAP {
        m.actions.entry(0).or_default().insert((a + 1, a), poly_term(vec![], q(1)));
    }
    m
}

fn zero_module() -> DGModule {
    DGModule::new("zero", Arc::new(bgm_block(0)), Side::Left, vec![], vec![])
}

/// Build a worked object from its catalogue name, for example
/// "bgm.skyscraper n=2" or "bga.omega".
pub fn build_entry(name: &str) -> Result<CatalogueEntry, EngineError> {
    let name = name.trim();
    let (stem, rest) = match name.split_once(char::is_whitespace) {
        Some((s, r)) => (s, r),
        None => (name, ""),
    };
    let params = entry_params(rest)?;
    let limit = |v: i64, what: &str| -> Result<i64, EngineError> {
        if v.unsigned_abs() as usize > CAP {
            Err(EngineError::Unsupported(format!(
                "catalogue parameter {}={} exceeds the cap {}",
                what, v, CAP
            )))
        } else {
            Ok(v)
        }
    };
    let (module, fixture) = match stem {
        "bgm.character" => {
            let n = limit(need(&params, "n", stem)?, "n")?;
            let fx = (1..=3).contains(&n).then(|| format!("bgm_character_n{}", n));
            (character_module(n), fx)
        }
        "bgm.skyscraper" => {
            let n = limit(need(&params, "n", stem)?, "n")?;
            let fx = (0..=2).contains(&n).then(|| format!("bgm_skyscraper_n{}", n));
            (skyscraper_module(n), fx)
        }
        "bgm.infinitesimal" => {
            let m = limit(need(&params, "m", stem)?, "m")?;
            if m < 0 {
                return Err(EngineError::Unsupported("the order must not be negative".into()));
            }
            let fx = (0..=2).contains(&m).then(|| format!("bgm_infinitesimal_m{}", m));
            (infinitesimal_module(m as usize), fx)
        }
        "bgm.omega_formal" => (omega_formal_module(), Some("bgm_omega_formal".into())),
        "bgm.infinitesimal_s1" => {
            let m = limit(need(&params, "m", stem)?, "m")?;
            if m < 0 {
                return Err(EngineError::Unsupported("the order must not be negative".into()));
            }
            let fx = (0..=2).contains(&m).then(|| format!("bgm_infinitesimal_s1_m{}", m));
            (infinitesimal_s1_module(m as usize), fx)
        }
        "bgm.omega_s1" => (omega_s1_module(), Some("bgm_omega_s1".into())),
        "bga.skyscraper" => (bga_skyscraper_module(), Some("bga_skyscraper".into())),
        "bga.omega" => (bga_omega_module(), Some("bga_omega".into())),
        "zero" => (zero_module(), None),
        other => {
            return Err(EngineError::Unsupported(format!(
                "no catalogue entry named {}",
                other
            )))
        }
    };
    Ok(CatalogueEntry { name: name.to_string(), fixture, module })
}

// ------------------------------------------------- verification of a row

/// Everything recomputed for one catalogue row, ready to compare against
/// its frozen table.
pub struct RowTables {
    pub window: Window,
    pub pieces: BTreeMap<Trigrade, usize>,
    pub towers: Vec<(i64, i64, usize)>,
    pub un: BTreeMap<i64, usize>,
}

/// Outcome of replaying one row: which parts of the frozen table matched
/// and whether the round trip came back to the source.
pub struct RowReport {
    pub name: String,
    pub pieces_match: bool,
    pub towers_match: bool,
    pub un_match: bool,
    pub un_acyclic: bool,
    pub roundtrip_acyclic: bool,
    pub tables: RowTables,
}

impl RowReport {
    pub fn ok(&self) -> bool {
        self.pieces_match && self.towers_match && self.un_match && self.roundtrip_acyclic
    }
}

/// Default window of the block tables.
pub fn block_window() -> Window {
    Window::new(-8, 8, -6, 6, 0)
}

/// Recompute the duality image, the free towers, and the parameter-one
/// specialization of a finite block module.
pub fn row_tables(m: &DGModule, w: &Window) -> Result<RowTables, EngineError> {
    let nm = kappa_filtered(m)?;
    let real = nm.realize(w)?;
    let coh = cohomology_dims(&real.complex, w)?;
    let pieces = coh.certified_nonzero();
    let ucx = un_block(&nm)?;
    let uw = Window::new(w.deg_min, w.deg_max, 0, 0, 0);
    let ucoh = cohomology_dims(&ucx, &uw)?;
    let un: BTreeMap<i64, usize> =
        ucoh.certified_nonzero().into_iter().map(|(g, v)| (g.deg, v)).collect();
    let mut towers = vec![];
    for (&d, &dim) in &un {
        let wbase = pieces
            .iter()
            .filter(|(g, _)| g.deg == d)
            .map(|(g, _)| g.wt)
            .min()
            .ok_or_else(|| {
                EngineError::Unsupported(format!(
                    "a class survives specialization in degree {} without a tower",
                    d
                ))
            })?;
        for c in 0..=2 {
            let have = pieces.get(&Trigrade::new(d, wbase + c, 0)).copied().unwrap_or(0);
            if have < dim {
                return Err(EngineError::Unsupported(format!(
                    "tower at degree {} is not persistent at weight {}",
                    d,
                    wbase + c
                )));
            }
        }
        towers.push((d, wbase, dim));
    }
    Ok(RowTables { window: *w, pieces, towers, un })
}

/// Replay one catalogue row against its frozen table and run the round
/// trip back to the doubly sheared source.
pub fn verify_table_row(name: &str, dir: Option<&Path>) -> Result<RowReport, EngineError> {
    let entry = build_entry(name)?;
    let w = block_window();
    let tables = row_tables(&entry.module, &w)?;
    let (pieces_match, towers_match, un_match) = match &entry.fixture {
        Some(stem) => {
            let sections = load_fixture(dir, stem)?;
            let sec = sections
                .iter()
                .find(|s| !s.pieces.is_empty() || !s.un.is_empty())
                .ok_or_else(|| {
                    EngineError::Unsupported(format!("table {} has no piece lines", stem))
                })?;
            let expected: BTreeMap<Trigrade, usize> = sec
                .pieces
                .iter()
                .filter(|(_, (_, cert))| *cert)
                .map(|(g, (dim, _))| (*g, *dim))
                .collect();
            let mut towers = tables.towers.clone();
            towers.sort();
            let mut ft = sec.towers.clone();
            ft.sort();
            (expected == tables.pieces, towers == ft, sec.un == tables.un)
        }
        None => (
            tables.pieces.is_empty(),
            tables.towers.is_empty(),
            tables.un.is_empty(),
        ),
    };
    let (cm, _) = block_roundtrip_counit(&entry.module, &w)?;
    cm.check()?;
    let roundtrip_acyclic = cone_certified_acyclic(&cm, &w)?;
    Ok(RowReport {
        name: name.to_string(),
        pieces_match,
        towers_match,
        un_match,
        un_acyclic: tables.un.is_empty(),
        roundtrip_acyclic,
        tables,
    })
}

// ------------------------------------------------- matrix factorizations

/// A folded two-periodic factorization of a potential: two square matrices
/// over the coordinate letters whose products both equal the potential
/// times the identity.
pub struct MatrixFactorization {
    pub vars: Vec<String>,
    pub a: Vec<Vec<Poly>>,
    pub b: Vec<Vec<Poly>>,
    pub potential: Poly,
    pub products_check: bool,
    pub contractible: Option<bool>,
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ma, ca) in a {
        for (mb, cb) in b {
            let mut exps: BTreeMap<usize, u32> = BTreeMap::new();
            for &(i, e) in ma.iter().chain(mb.iter()) {
                *exps.entry(i).or_insert(0) += e;
            }
            let mono: Monomial = exps.into_iter().collect();
            let e = out.entry(mono).or_insert_with(|| q(0));
            *e += ca.clone() * cb.clone();
        }
    }
    out.retain(|_, c| {
        use num::Zero;
        !c.is_zero()
    });
    out
}

fn poly_add(a: &Poly, b: &Poly) -> Poly {
    let mut out = a.clone();
    for (m, c) in b {
        let e = out.entry(m.clone()).or_insert_with(|| q(0));
        *e += c.clone();
    }
    out.retain(|_, c| {
        use num::Zero;
        !c.is_zero()
    });
    out
}

/// Fold a finite free complex with an odd homotopy over a block into its
/// two-periodic factorization: the even-to-odd and odd-to-even parts of
/// the combined map, with the potential read off the block differential.
/// The entry must be free over the coordinate letters with every other
/// letter presented by actions.
pub fn extract_mf(m: &DGModule) -> Result<MatrixFactorization, EngineError> {
    let (coords, delta_idx) = match &m.algebra.kind {
        AlgebraKind::BgmBlock(_) => (vec![0usize], 1usize),
        AlgebraKind::BgaBlock => (vec![0usize, 1], 2usize),
        _ => {
            return Err(EngineError::Unsupported(
                "factorizations are extracted over the group blocks".into(),
            ))
        }
    };
    if m.gens.is_empty() {
        return Err(EngineError::Unsupported(
            "factorization extraction needs a finite free presentation".into(),
        ));
    }
    if m.free_vars != coords {
        return Err(EngineError::Unsupported(
            "factorization extraction needs the coordinate letters free and nothing else".into(),
        ));
    }
    let potential = m.algebra.differential.get(&delta_idx).cloned().unwrap_or_default();
    let even: Vec<usize> =
        (0..m.gens.len()).filter(|&j| m.gens[j].1.deg.rem_euclid(2) == 0).collect();
    let odd: Vec<usize> =
        (0..m.gens.len()).filter(|&j| m.gens[j].1.deg.rem_euclid(2) == 1).collect();
    if even.len() != odd.len() {
        return Err(EngineError::Unsupported(
            "the folded presentation needs equal even and odd ranks".into(),
        ));
    }
    let combined = |i: usize, j: usize| -> Poly {
        let mut p = m.differential.get(&(i, j)).cloned().unwrap_or_default();
        if let Some(dm) = m.actions.get(&delta_idx) {
            if let Some(extra) = dm.get(&(i, j)) {
                p = poly_add(&p, extra);
            }
        }
        p
    };
    let a: Vec<Vec<Poly>> = even
        .iter()
        .map(|&i| odd.iter().map(|&j| combined(i, j)).collect())
        .collect();
    let b: Vec<Vec<Poly>> = odd
        .iter()
        .map(|&i| even.iter().map(|&j| combined(i, j)).collect())
        .collect();
    let r = even.len();
    let mut products_check = true;
    for (m1, m2) in [(&a, &b), (&b, &a)] {
        for i in 0..r {
            for j in 0..r {
                let mut acc = Poly::new();
                for l in 0..r {
                    acc = poly_add(&acc, &poly_mul(&m1[i][l], &m2[l][j]));
                }
                let expect = if i == j { potential.clone() } else { Poly::new() };
                if acc != expect {
                    products_check = false;
                }
            }
        }
    }
    let contractible = match &m.algebra.kind {
        AlgebraKind::BgmBlock(n) => Some(factorization_contractible(*n)),
        _ => None,
    };
    Ok(MatrixFactorization {
        vars: coords.iter().map(|&i| m.algebra.gens[i].name.clone()).collect(),
        a,
        b,
        potential,
        products_check,
        contractible,
    })
}

/// Contractibility of the one-by-one torus factorization: a polynomial
/// identity n s + x s' = 1 is solvable under a degree cap exactly when the
/// block index is not zero.
fn factorization_contractible(n: i64) -> bool {
    use crate::exact_bigraded_linalg::SparseMat;
    let dcap = 4usize;
    let rows = dcap + 2;
    let cols = 2 * (dcap + 1);
    let mut tm = vec![];
    let mut ta = vec![];
    for deg in 0..rows {
        if deg <= dcap {
            tm.push((deg as u32, deg as u32, q(n)));
            ta.push((deg as u32, deg as u32, q(n)));
        }
        if deg >= 1 && deg - 1 <= dcap {
            tm.push((deg as u32, (dcap + deg) as u32, q(1)));
            ta.push((deg as u32, (dcap + deg) as u32, q(1)));
        }
    }
    ta.push((0, cols as u32, q(1)));
    let m = SparseMat::from_triplets(rows, cols, tm);
    let aug = SparseMat::from_triplets(rows, cols + 1, ta);
    m.rank() == aug.rank()
}

/// The resolved presentation of the additive skyscraper used for the
/// folded factorization: the two-variable free resolution with the odd
/// homotopy whose bracket with the differential is the potential.
pub fn bga_skyscraper_resolution() -> DGModule {
    let alg = Arc::new(bga_block());
    let mut m = DGModule::new(
        "resolved additive skyscraper",
        alg,
        Side::Left,
        vec![
            ("e".into(), Trigrade::new(0, 0, 0)),
            ("u1".into(), Trigrade::new(-1, -1, 0)),
            ("u2".into(), Trigrade::new(-1, 1, 0)),
            ("v".into(), Trigrade::new(-2, 0, 0)),
        ],
        vec![0, 1],
    );
    let x = |e: u32| poly_term(vec![(0, e)], q(1));
    let y = |e: u32| poly_term(vec![(1, e)], q(1));
    let half = Rational::new(1.into(), 2.into());
    // differential: the two-variable free resolution of the origin
    m.differential.insert((0, 1), x(1));
    m.differential.insert((0, 2), y(1));
    m.differential.insert((1, 3), poly_term(vec![(1, 1)], q(1)));
    m.differential.insert((2, 3), poly_term(vec![(0, 1)], q(-1)));
    // odd homotopy: halves chosen so the bracket with the differential is
    // multiplication by the potential
    let dm = m.actions.entry(2).or_default();
    dm.insert((1, 0), poly_term(vec![(1, 1)], half.clone()));
    dm.insert((2, 0), poly_term(vec![(0, 1)], half.clone()));
    dm.insert((3, 1), poly_term(vec![(0, 1)], half.clone()));
    dm.insert((3, 2), poly_term(vec![(1, 1)], -half));
    m
}

/// The free presentation of the torus skyscraper used for the one-by-one
/// factorization: two rows free over the coordinate, the odd operator
/// acting by the block index.
pub fn bgm_skyscraper_free(n: i64) -> DGModule {
    let alg = Arc::new(bgm_block(n));
    let mut m = DGModule::new(
        &format!("free torus skyscraper weight {}", n),
        alg,
        Side::Left,
        vec![
            ("e0".into(), Trigrade::new(0, n, 0)),
            ("e1".into(), Trigrade::new(-1, n - 1, 0)),
        ],
        vec![0],
    );
    m.differential.insert((0, 1), poly_term(vec![(0, 1)], q(1)));
    if n != 0 {
        m.actions.entry(1).or_default().insert((1, 0), poly_term(vec![], q(n)));
    }
    m
}

/// Extract the folded factorization of a named catalogue entry.
pub fn extract_mf_entry(name: &str) -> Result<MatrixFactorization, EngineError> {
    let name = name.trim();
    let (stem, rest) = match name.split_once(char::is_whitespace) {
        Some((s, r)) => (s, r),
        None => (name, ""),
    };
    match stem {
        "bga.skyscraper" => extract_mf(&bga_skyscraper_resolution()),
        "bgm.character" | "bgm.skyscraper" => {
            let params = entry_params(rest)?;
            let n = need(&params, "n", stem)?;
            extract_mf(&bgm_skyscraper_free(n))
        }
        other => Err(EngineError::Unsupported(format!(
            "no folded factorization for catalogue entry {}",
            other
        ))),
    }
}

/// Render a factorization entry in the table format: coefficient then
/// every coordinate letter with its exponent.
pub fn mf_poly_string(vars: &[String], p: &Poly) -> String {
    if p.is_empty() {
        return "0".into();
    }
    p.iter()
        .map(|(mono, c)| {
            let mut s = format!("{}", c);
            for (vi, _name) in vars.iter().enumerate() {
                let e = mono
                    .iter()
                    .find(|&&(g, _)| g == vi)
                    .map(|&(_, e)| e)
                    .unwrap_or(0);
                s.push_str(&format!(" {}^{}", vars[vi], e));
            }
            s
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

// ----------------------------------------------------------- specialization

/// Parameter-one specialization table of a named row, with whether it is
/// empty (acyclic) and the per-degree dimensions.
pub fn un_table(name: &str) -> Result<BTreeMap<i64, usize>, EngineError> {
    let entry = build_entry(name)?;
    let nm = kappa_filtered(&entry.module)?;
    let ucx = un_block(&nm)?;
    let w = block_window();
    let uw = Window::new(w.deg_min, w.deg_max, 0, 0, 0);
    let ucoh = cohomology_dims(&ucx, &uw)?;
    Ok(ucoh.certified_nonzero().into_iter().map(|(g, v)| (g.deg, v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_table_row_replays_and_round_trips() {
        for name in [
            "bgm.character n=1",
            "bgm.character n=2",
            "bgm.character n=3",
            "bgm.skyscraper n=0",
            "bgm.skyscraper n=1",
            "bgm.skyscraper n=2",
            "bgm.infinitesimal m=0",
            "bgm.infinitesimal m=1",
            "bgm.infinitesimal m=2",
            "bgm.omega_formal",
            "bgm.infinitesimal_s1 m=0",
            "bgm.infinitesimal_s1 m=1",
            "bgm.infinitesimal_s1 m=2",
            "bgm.omega_s1",
            "bga.skyscraper",
            "bga.omega",
            "zero",
        ] {
            let r = verify_table_row(name, None).unwrap();
            assert!(r.pieces_match, "{}: duality image differs from the table", name);
            assert!(r.towers_match, "{}: towers differ from the table", name);
            assert!(r.un_match, "{}: specialization differs from the table", name);
            assert!(r.roundtrip_acyclic, "{}: round trip failed", name);
        }
    }

    #[test]
    fn characters_specialize_to_nothing() {
        for n in 1..=3 {
            let un = un_table(&format!("bgm.character n={}", n)).unwrap();
            assert!(un.is_empty(), "character {} must specialize to zero", n);
        }
    }

    #[test]
    fn folded_factorization_matches_the_frozen_matrices() {
        let mf = extract_mf_entry("bga.skyscraper").unwrap();
        assert!(mf.products_check);
        let sections = load_fixture(None, "mf_bga").unwrap();
        let lines: Vec<&String> = sections.iter().flat_map(|s| s.other.iter()).collect();
        let mut expect = vec![];
        for (nm, m) in [("A", &mf.a), ("B", &mf.b)] {
            for (i, row) in m.iter().enumerate() {
                for (j, p) in row.iter().enumerate() {
                    expect.push(format!("{}[{}][{}] = {}", nm, i, j, mf_poly_string(&mf.vars, p)));
                }
            }
        }
        for e in &expect {
            assert!(
                lines.iter().any(|l| l.as_str() == e),
                "entry {} not found in the frozen table",
                e
            );
        }
    }

    #[test]
    fn torus_factorizations_contract_away_from_zero() {
        let sections = load_fixture(None, "mf_bgm").unwrap();
        let lines: Vec<&String> = sections.iter().flat_map(|s| s.other.iter()).collect();
        for n in 0..=3i64 {
            let mf = extract_mf_entry(&format!("bgm.skyscraper n={}", n)).unwrap();
            assert!(mf.products_check, "products fail at n={}", n);
            let c = mf.contractible.unwrap();
            assert_eq!(c, n != 0, "contractibility at n={}", n);
            let line = format!("n={} contractible={}", n, if c { "yes" } else { "no" });
            assert!(lines.iter().any(|l| l.as_str() == line), "missing line {}", line);
        }
    }
}
