//! Differential graded modules over presented algebras.
//!
//! A module is stored as a finite list of generators together with a set of
//! algebra generators over which it is free; the underlying space is the
//! span of free-monomial times generator.  Actions of the remaining algebra
//! generators, the differential, and the optional odd mixed operator are
//! matrices whose entries are polynomials in the free variables.  Crossing
//! an acting generator past the free part is resolved through the algebra's
//! rewrite rules, including the inverse rules where the normal order puts
//! the free part after the acting generator.

use crate::algebra_presentations::{
    poly_add_into, poly_term, poly_zero, AlgebraPresentation, Monomial, Poly,
};
use crate::exact_bigraded_linalg::{
    q, GradedComplex, GradedMap, GradedSpace, Rational, SparseMat, Trigrade, Window,
};
use num::traits::Zero;
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum ModuleError {
    #[error("algebra error: {0}")]
    Algebra(#[from] crate::algebra_presentations::AlgebraError),
    #[error("the commutation rule for free variables {0} and {1} leaves the free subalgebra")]
    BadFreePair(String, String),
    #[error("differential of free variable {0} leaves the free subalgebra")]
    BadFreeDifferential(String),
    #[error("matrix entry at ({0},{1}) is not supported on the free variables")]
    EntryNotFree(usize, usize),
    #[error("matrix entry at ({0},{1}) is not homogeneous for the declared shift")]
    EntryNotHomogeneous(usize, usize),
    #[error("tensor product refused: it is only defined against the semifree catalogue kernels ({0})")]
    TensorRefused(String),
    #[error("side mismatch: expected a {0} module")]
    SideMismatch(String),
    #[error("side change is only defined over the filtered-operator and block algebras")]
    SideChangeUnsupported,
    #[error("basis element {0} escaped during crossing (recursion too deep)")]
    CrossingDiverged(String),
    #[error("linear algebra error: {0}")]
    Linalg(#[from] crate::exact_bigraded_linalg::LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Matrix over the free-variable coefficient ring: (row gen, col gen) to a
/// polynomial supported on free variables.
pub type ModMat = BTreeMap<(usize, usize), Poly>;

#[derive(Clone, Debug)]
pub struct DGModule {
    pub name: String,
    pub algebra: Arc<AlgebraPresentation>,
    pub side: Side,
    pub gens: Vec<(String, Trigrade)>,
    /// indices of algebra generators over which the module is free
    pub free_vars: Vec<usize>,
    /// action matrices for the remaining algebra generators
    pub actions: BTreeMap<usize, ModMat>,
    pub differential: ModMat,
    /// odd mixed operator (interpolation or its dual), with its shift
    pub mixed: Option<(Trigrade, ModMat)>,
    /// accumulated shear: displayed degree is original minus shear * weight
    pub shear_state: i64,
}

impl DGModule {
    pub fn new(
        name: &str,
        algebra: Arc<AlgebraPresentation>,
        side: Side,
        gens: Vec<(String, Trigrade)>,
        free_vars: Vec<usize>,
    ) -> Self {
        DGModule {
            name: name.into(),
            algebra,
            side,
            gens,
            free_vars,
            actions: BTreeMap::new(),
            differential: BTreeMap::new(),
            mixed: None,
            shear_state: 0,
        }
    }

    pub fn is_free_var(&self, g: usize) -> bool {
        self.free_vars.contains(&g)
    }

    fn poly_is_free(&self, p: &Poly) -> bool {
        p.keys().all(|m| m.iter().all(|(i, _)| self.is_free_var(*i)))
    }

    /// Structural sanity: free variables interact by default rules only,
    /// their differentials stay free, and all matrix entries are free and
    /// homogeneous for the declared shifts.
    pub fn check_structure(&self) -> Result<(), ModuleError> {
        for (a, &i) in self.free_vars.iter().enumerate() {
            for &j in &self.free_vars[a + 1..] {
                let (hi, lo) = if i > j { (i, j) } else { (j, i) };
                if let Some(rule) = self.algebra.swaps.get(&(hi, lo)) {
                    // rewrite corrections must stay inside the free subset
                    if !self.poly_is_free(rule) {
                        return Err(ModuleError::BadFreePair(
                            self.algebra.gens[i].name.clone(),
                            self.algebra.gens[j].name.clone(),
                        ));
                    }
                }
            }
            if let Some(d) = self.algebra.differential.get(&i) {
                if !self.poly_is_free(d) {
                    return Err(ModuleError::BadFreeDifferential(
                        self.algebra.gens[i].name.clone(),
                    ));
                }
            }
        }
        let mut mats: Vec<(Trigrade, &ModMat)> =
            vec![(Trigrade::new(1, 0, 0), &self.differential)];
        for (&g, m) in &self.actions {
            mats.push((self.algebra.gens[g].grade, m));
        }
        if let Some((sh, m)) = &self.mixed {
            mats.push((*sh, m));
        }
        for (shift, mat) in mats {
            for (&(i, j), p) in mat {
                if !self.poly_is_free(p) {
                    return Err(ModuleError::EntryNotFree(i, j));
                }
                let expect = self.gens[j].1.plus(shift).minus(self.gens[i].1);
                for m in p.keys() {
                    if self.algebra.grade_of_monomial(m) != expect {
                        return Err(ModuleError::EntryNotHomogeneous(i, j));
                    }
                }
            }
        }
        Ok(())
    }

    // -------------------------------------------------- action application

    /// Expand g * h (left case) or h * g (right case) so that the acting
    /// generator ends up adjacent to the module generator.  Returns words
    /// with rational coefficients; words are applied factor by factor.
    fn crossing_words(&self, g: usize, h: usize, left: bool) -> Vec<(Vec<(usize, u32)>, Rational)> {
        let (outer, inner) = (g, h);
        if left {
            // want g * h rewritten with h first
            if outer > inner {
                self.algebra
                    .swaps
                    .get(&(outer, inner))
                    .cloned()
                    .unwrap_or_else(|| default_swap(&self.algebra, outer, inner))
                    .into_iter()
                    .map(|(m, c)| (m, c))
                    .collect()
            } else {
                // invert h * g = s * (g h) + rest  =>  g * h = (h g - rest)/s
                invert_rule(&self.algebra, inner, outer)
            }
        } else {
            // right case: want h * g rewritten with g first
            if inner > outer {
                self.algebra
                    .swaps
                    .get(&(inner, outer))
                    .cloned()
                    .unwrap_or_else(|| default_swap(&self.algebra, inner, outer))
                    .into_iter()
                    .map(|(m, c)| (m, c))
                    .collect()
            } else {
                invert_rule(&self.algebra, outer, inner)
            }
        }
    }

    /// Apply a single algebra generator to the basis element (f, j):
    /// g * (f e_j) for left modules, (e_j f) * g for right modules.
    pub fn apply_gen(&self, g: usize, f: &Monomial, j: usize, depth: usize) -> Result<Vec<(Monomial, usize, Rational)>, ModuleError> {
        if depth > 1000 {
            return Err(ModuleError::CrossingDiverged(self.algebra.mono_string(f)));
        }
        if self.is_free_var(g) {
            let single: Monomial = vec![(g, 1)];
            let prod = match self.side {
                Side::Left => self.algebra.mul_mono(&single, f),
                Side::Right => self.algebra.mul_mono(f, &single),
            };
            return Ok(prod.into_iter().map(|(m, c)| (m, j, c)).collect());
        }
        if f.is_empty() {
            let mut out = vec![];
            if let Some(mat) = self.actions.get(&g) {
                for (&(k, jj), p) in mat {
                    if jj != j {
                        continue;
                    }
                    for (m, c) in p {
                        out.push((m.clone(), k, c.clone()));
                    }
                }
            }
            return Ok(out);
        }
        // crossing: pick the free factor adjacent to the acting generator
        let (h, f_rest) = match self.side {
            Side::Left => {
                let (h, e) = f[0];
                let mut rest = f.clone();
                if e == 1 {
                    rest.remove(0);
                } else {
                    rest[0].1 -= 1;
                }
                (h, rest)
            }
            Side::Right => {
                let &(h, e) = f.last().unwrap();
                let mut rest = f.clone();
                if e == 1 {
                    rest.pop();
                } else {
                    rest.last_mut().unwrap().1 -= 1;
                }
                (h, rest)
            }
        };
        let words = self.crossing_words(g, h, self.side == Side::Left);
        let mut out = vec![];
        for (word, c) in words {
            for (m, k, cc) in self.apply_word(&word, &f_rest, j, depth + 1)? {
                out.push((m, k, cc * c.clone()));
            }
        }
        Ok(merge_terms(out))
    }

    /// Apply a word of generator powers to the basis element (f, j).  For
    /// left modules the rightmost factor acts first; for right modules the
    /// leftmost.
    pub fn apply_word(&self, word: &[(usize, u32)], f: &Monomial, j: usize, depth: usize) -> Result<Vec<(Monomial, usize, Rational)>, ModuleError> {
        if depth > 1000 {
            return Err(ModuleError::CrossingDiverged(self.algebra.mono_string(f)));
        }
        let mut factors: Vec<usize> = vec![];
        for (g, e) in word {
            for _ in 0..*e {
                factors.push(*g);
            }
        }
        let mut terms: Vec<(Monomial, usize, Rational)> = vec![(f.clone(), j, q(1))];
        let order: Box<dyn Iterator<Item = &usize>> = match self.side {
            Side::Left => Box::new(factors.iter().rev()),
            Side::Right => Box::new(factors.iter()),
        };
        for &g in order {
            let mut next = vec![];
            for (ff, jj, c) in &terms {
                for (m, k, cc) in self.apply_gen(g, ff, *jj, depth + 1)? {
                    next.push((m, k, cc * c.clone()));
                }
            }
            terms = merge_terms(next);
        }
        Ok(terms)
    }

    /// Differential on the basis element (f, j), with the Leibniz sign.
    fn d_basis(&self, f: &Monomial, j: usize) -> Result<Vec<(Monomial, usize, Rational)>, ModuleError> {
        let mut out = vec![];
        let df = self.algebra.d_mono(f);
        if !self.poly_is_free(&df) {
            return Err(ModuleError::BadFreeDifferential(self.algebra.mono_string(f)));
        }
        match self.side {
            Side::Left => {
                for (m, c) in &df {
                    out.push((m.clone(), j, c.clone()));
                }
                let sign = if self.algebra.monomial_is_odd(f) { q(-1) } else { q(1) };
                for (&(k, jj), p) in &self.differential {
                    if jj != j {
                        continue;
                    }
                    for (m, c) in p {
                        let prod = self.algebra.mul_mono(f, m);
                        for (mm, cc) in prod {
                            out.push((mm, k, cc * c.clone() * sign.clone()));
                        }
                    }
                }
            }
            Side::Right => {
                for (&(k, jj), p) in &self.differential {
                    if jj != j {
                        continue;
                    }
                    for (m, c) in p {
                        let prod = self.algebra.mul_mono(m, f);
                        for (mm, cc) in prod {
                            out.push((mm, k, cc * c.clone()));
                        }
                    }
                }
                let sign = if self.gens[j].1.is_odd() { q(-1) } else { q(1) };
                for (m, c) in &df {
                    out.push((m.clone(), j, c.clone() * sign.clone()));
                }
            }
        }
        Ok(merge_terms(out))
    }

    /// Mixed operator on the basis element; it extends free-linearly with
    /// the Koszul sign of the free part.
    fn mixed_basis(&self, f: &Monomial, j: usize) -> Result<Vec<(Monomial, usize, Rational)>, ModuleError> {
        let Some((_, mat)) = &self.mixed else { return Ok(vec![]) };
        let mut out = vec![];
        let sign = if self.algebra.monomial_is_odd(f) { q(-1) } else { q(1) };
        for (&(k, jj), p) in mat {
            if jj != j {
                continue;
            }
            for (m, c) in p {
                let prod = match self.side {
                    Side::Left => self.algebra.mul_mono(f, m),
                    Side::Right => self.algebra.mul_mono(m, f),
                };
                for (mm, cc) in prod {
                    let s = match self.side {
                        Side::Left => sign.clone(),
                        Side::Right => {
                            if self.gens[j].1.is_odd() {
                                q(-1)
                            } else {
                                q(1)
                            }
                        }
                    };
                    out.push((mm, k, cc * c.clone() * s));
                }
            }
        }
        Ok(merge_terms(out))
    }

    // --------------------------------------------------------- realization

    /// Grade of a basis element (f, j) before the shear display.
    fn basis_grade(&self, f: &Monomial, j: usize) -> Trigrade {
        self.algebra.grade_of_monomial(f).plus(self.gens[j].1)
    }

    fn display(&self, g: Trigrade) -> Trigrade {
        g.sheared(self.shear_state)
    }

    fn undisplay(&self, g: Trigrade) -> Trigrade {
        Trigrade::new(g.deg + self.shear_state * g.wt, g.wt, g.aux)
    }

    /// Materialize every piece of the padded window as an exact complex.
    pub fn realize(&self, w: &Window) -> Result<Realization, ModuleError> {
        self.check_structure()?;
        let wp = w.padded();
        let mut space = GradedSpace::new();
        let mut basis: BTreeMap<Trigrade, Vec<(Monomial, usize)>> = BTreeMap::new();
        // display grades of all pieces: enumerate per generator
        for (j, (gname, ggrade)) in self.gens.iter().enumerate() {
            // for each display trigrade in the padded window, the free part
            // must have grade display^-1(g) - gen grade
            for deg in wp.deg_min..=wp.deg_max {
                for wt in wp.wt_min..=wp.wt_max {
                    for aux in 0..=wp.aux_max {
                        let disp = Trigrade::new(deg, wt, aux);
                        let need = self.undisplay(disp).minus(*ggrade);
                        let monos = self.algebra.graded_piece_over(&self.free_vars, need)?;
                        for m in monos {
                            let label = match (m.is_empty(), self.side) {
                                (true, _) => gname.clone(),
                                (false, Side::Left) => {
                                    format!("{} {}", self.algebra.mono_string(&m), gname)
                                }
                                (false, Side::Right) => {
                                    format!("{} {}", gname, self.algebra.mono_string(&m))
                                }
                            };
                            space.add_basis_vector(disp, label);
                            basis.entry(disp).or_default().push((m, j));
                        }
                    }
                }
            }
        }
        let space = Arc::new(space);
        let mut d = GradedMap::zero(space.clone(), space.clone(), Trigrade::new(1, 0, 0));
        for (disp, elems) in &basis {
            let target = disp.plus(Trigrade::new(1, 0, 0));
            let Some(tgt_elems) = basis.get(&target) else { continue };
            let pos: BTreeMap<(Monomial, usize), usize> = tgt_elems
                .iter()
                .enumerate()
                .map(|(i, (m, j))| ((m.clone(), *j), i))
                .collect();
            let mut tris = vec![];
            for (col, (f, j)) in elems.iter().enumerate() {
                for (m, k, c) in self.d_basis(f, *j)? {
                    if let Some(&row) = pos.get(&(m.clone(), k)) {
                        tris.push((row as u32, col as u32, c));
                    }
                }
            }
            let mat = SparseMat::from_triplets(tgt_elems.len(), elems.len(), tris);
            if !mat.is_zero() {
                d.set_block(*disp, mat);
            }
        }
        let complex = GradedComplex::new(space, d);
        complex.check_d_squared()?;
        Ok(Realization { basis, complex, window: *w })
    }

    /// Operator matrix for an algebra generator on a realization.
    pub fn operator(&self, real: &Realization, g: usize) -> Result<GradedMap, ModuleError> {
        let shift_raw = self.algebra.gens[g].grade;
        self.operator_by(real, shift_raw, |f, j| self.apply_gen(g, f, j, 0))
    }

    /// Operator matrix for the mixed operator on a realization.
    pub fn mixed_operator(&self, real: &Realization) -> Result<GradedMap, ModuleError> {
        let Some((shift_raw, _)) = &self.mixed else {
            return Ok(GradedMap::zero(
                real.complex.space.clone(),
                real.complex.space.clone(),
                Trigrade::default(),
            ));
        };
        self.operator_by(real, *shift_raw, |f, j| self.mixed_basis(f, j))
    }

    pub(crate) fn operator_by(
        &self,
        real: &Realization,
        shift_raw: Trigrade,
        apply: impl Fn(&Monomial, usize) -> Result<Vec<(Monomial, usize, Rational)>, ModuleError>,
    ) -> Result<GradedMap, ModuleError> {
        // display shift of an operator of raw shift s is s sheared
        let shift = shift_raw.sheared(self.shear_state);
        let space = real.complex.space.clone();
        let mut map = GradedMap::zero(space.clone(), space.clone(), shift);
        for (disp, elems) in &real.basis {
            let target = disp.plus(shift);
            let Some(tgt) = real.basis.get(&target) else { continue };
            let pos: BTreeMap<(Monomial, usize), usize> =
                tgt.iter().enumerate().map(|(i, (m, j))| ((m.clone(), *j), i)).collect();
            let mut tris = vec![];
            for (col, (f, j)) in elems.iter().enumerate() {
                for (m, k, c) in apply(f, *j)? {
                    if let Some(&row) = pos.get(&(m.clone(), k)) {
                        tris.push((row as u32, col as u32, c));
                    }
                }
            }
            let mat = SparseMat::from_triplets(tgt.len(), elems.len(), tris);
            if !mat.is_zero() {
                map.set_block(*disp, mat);
            }
        }
        Ok(map)
    }
}

/// A realized window: the exact complex together with the basis bookkeeping
/// needed to build operators on it.
#[derive(Clone, Debug)]
pub struct Realization {
    pub basis: BTreeMap<Trigrade, Vec<(Monomial, usize)>>,
    pub complex: GradedComplex,
    pub window: Window,
}

fn default_swap(alg: &AlgebraPresentation, j: usize, i: usize) -> Poly {
    let sign = if alg.gens[j].grade.is_odd() && alg.gens[i].grade.is_odd() { q(-1) } else { q(1) };
    poly_term(vec![(i.min(j), 1), (i.max(j), 1)], sign)
}

/// Invert the rule hi * lo = s (lo hi) + rest to express lo * hi.
fn invert_rule(alg: &AlgebraPresentation, hi: usize, lo: usize) -> Vec<(Vec<(usize, u32)>, Rational)> {
    let rule = alg
        .swaps
        .get(&(hi, lo))
        .cloned()
        .unwrap_or_else(|| default_swap(alg, hi, lo));
    let lead: Monomial = vec![(lo, 1), (hi, 1)];
    let s = rule.get(&lead).cloned().unwrap_or_else(Rational::zero);
    assert!(!s.is_zero(), "swap rule for {} * {} has no leading term", alg.gens[hi].name, alg.gens[lo].name);
    let mut out = vec![(vec![(hi, 1), (lo, 1)], q(1) / s.clone())];
    for (m, c) in &rule {
        if *m == lead {
            continue;
        }
        out.push((m.clone(), -c.clone() / s.clone()));
    }
    out
}

fn merge_terms(terms: Vec<(Monomial, usize, Rational)>) -> Vec<(Monomial, usize, Rational)> {
    let mut acc: BTreeMap<(Monomial, usize), Rational> = BTreeMap::new();
    for (m, j, c) in terms {
        let e = acc.entry((m, j)).or_insert_with(Rational::zero);
        let nv = e.clone() + c;
        *e = nv;
    }
    acc.into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|((m, j), c)| (m, j, c))
        .collect()
}

// ------------------------------------------------------------- validation

/// Numerical report for the equivariance structure of a module on a window.
#[derive(Clone, Debug)]
pub struct EquivariantReport {
    pub d_squared: bool,
    /// each defining relation of the algebra, checked as operators
    pub relations: Vec<(String, bool)>,
    /// Leibniz for each acting generator: [d, g] = action of d(g)
    pub leibniz: Vec<(String, bool)>,
    pub mixed_squares_to_zero: Option<bool>,
    /// the computed curvature statement for the mixed operator
    pub curvature: Option<(String, bool)>,
    /// whether the mixed operator vanished after iterating inside the window
    pub locally_nilpotent: Option<bool>,
}

impl EquivariantReport {
    pub fn ok(&self) -> bool {
        self.d_squared
            && self.relations.iter().all(|(_, b)| *b)
            && self.leibniz.iter().all(|(_, b)| *b)
            && self.mixed_squares_to_zero.unwrap_or(true)
            && self.curvature.as_ref().map_or(true, |(_, b)| *b)
    }
}

/// Compare two graded maps on all pieces whose source and target lie well
/// inside the window (truncation-safe region).
fn maps_agree(a: &GradedMap, b: &GradedMap, w: &Window) -> bool {
    assert_eq!(a.shift, b.shift);
    let keys: Vec<Trigrade> = a.blocks.keys().chain(b.blocks.keys()).copied().collect();
    for g in keys {
        if !w.contains(g) || !w.contains(g.plus(a.shift)) {
            continue;
        }
        if a.block(g) != b.block(g) {
            return false;
        }
    }
    true
}

/// Full structural validation of a module on a window: differential square,
/// every algebra relation as operators, Leibniz for every acting generator,
/// and the mixed-operator curvature statement.  Local nilpotence is only
/// flagged, never rejected.
pub fn validate_equivariant(m: &DGModule, w: &Window) -> Result<EquivariantReport, ModuleError> {
    let real = m.realize(w)?;
    let d_squared = real.complex.check_d_squared().is_ok();
    let alg = &m.algebra;
    let inner = *w;
    // operators for every generator
    let mut ops: BTreeMap<usize, GradedMap> = BTreeMap::new();
    for g in 0..alg.gens.len() {
        ops.insert(g, m.operator(&real, g)?);
    }
    let op_of_word = |word: &[(usize, u32)]| -> Result<GradedMap, ModuleError> {
        let mut shift = Trigrade::default();
        for (g, e) in word {
            let s = alg.gens[*g].grade.sheared(m.shear_state);
            shift = shift.plus(Trigrade::new(
                s.deg * *e as i64,
                s.wt * *e as i64,
                s.aux * *e as i64,
            ));
        }
        let mut map = m.operator_by(&real, shift_unshear(shift, m.shear_state), |f, j| {
            m.apply_word(word, f, j, 0)
        })?;
        map.shift = shift;
        Ok(map)
    };
    let mut relations = vec![];
    for jx in 0..alg.gens.len() {
        for ix in 0..=jx {
            let (name, lhs_word, rhs): (String, Vec<(usize, u32)>, Poly) = if ix == jx {
                if !alg.gens[ix].is_odd() {
                    continue;
                }
                (
                    format!("{}^2 = 0", alg.gens[ix].name),
                    vec![(ix, 2)],
                    poly_zero(),
                )
            } else {
                let rule = alg
                    .swaps
                    .get(&(jx, ix))
                    .cloned()
                    .unwrap_or_else(|| default_swap(alg, jx, ix));
                (
                    format!("{} {} rule", alg.gens[jx].name, alg.gens[ix].name),
                    vec![(jx, 1), (ix, 1)],
                    rule,
                )
            };
            let lhs = op_of_word(&lhs_word)?;
            let mut rhs_map = GradedMap::zero(
                real.complex.space.clone(),
                real.complex.space.clone(),
                lhs.shift,
            );
            for (mono, c) in &rhs {
                let om = op_of_word(mono)?;
                for (g, b) in &om.blocks {
                    let cur = rhs_map.block(*g).plus(&b.scaled(c));
                    rhs_map.blocks.insert(*g, cur);
                }
            }
            rhs_map.blocks.retain(|_, b| !b.is_zero());
            relations.push((name, maps_agree(&lhs, &rhs_map, &inner)));
        }
    }
    // Leibniz per generator: d g - (-1)^{|g|} g d = op(d(g))
    let mut leibniz = vec![];
    for g in 0..alg.gens.len() {
        let og = &ops[&g];
        let dg_map = real.complex.d.compose(og)?;
        let gd_map = og.compose(&real.complex.d)?;
        let sign = if alg.gens[g].is_odd() { q(-1) } else { q(1) };
        let mut lhs = dg_map;
        for (gg, b) in &gd_map.blocks {
            let cur = lhs.block(*gg).plus(&b.scaled(&-sign.clone()));
            lhs.blocks.insert(*gg, cur);
        }
        lhs.blocks.retain(|_, b| !b.is_zero());
        let dpoly = alg.differential.get(&g).cloned().unwrap_or_default();
        let mut rhs = GradedMap::zero(real.complex.space.clone(), real.complex.space.clone(), lhs.shift);
        for (mono, c) in &dpoly {
            let om = op_of_word(mono)?;
            for (gg, b) in &om.blocks {
                let cur = rhs.block(*gg).plus(&b.scaled(c));
                rhs.blocks.insert(*gg, cur);
            }
        }
        rhs.blocks.retain(|_, b| !b.is_zero());
        leibniz.push((alg.gens[g].name.clone(), maps_agree(&lhs, &rhs, &inner)));
    }
    // mixed operator
    let (mixed_squares_to_zero, curvature, locally_nilpotent) = if m.mixed.is_some() {
        let mo = m.mixed_operator(&real)?;
        let sq = mo.compose(&mo)?;
        let sq_zero = sq.blocks.values().all(|b| b.is_zero());
        // curvature: [d, mixed] as an operator, reported as computed
        let dm = real.complex.d.compose(&mo)?;
        let md = mo.compose(&real.complex.d)?;
        let mut comm = dm;
        for (g, b) in &md.blocks {
            let cur = comm.block(*g).plus(b);
            comm.blocks.insert(*g, cur);
        }
        comm.blocks.retain(|_, b| !b.is_zero());
        let vanishes = comm.blocks.is_empty();
        let statement = if vanishes {
            "[d, mixed] = 0".to_string()
        } else {
            "[d, mixed] is the declared curvature".to_string()
        };
        // iterate the mixed operator until it exits the window
        let mut it = mo.clone();
        let mut nil = false;
        for _ in 0..(2 * (w.wt_max - w.wt_min).unsigned_abs() as usize + 2) {
            if it.blocks.values().all(|b| b.is_zero()) {
                nil = true;
                break;
            }
            it = mo.compose(&it)?;
        }
        let curv_ok = if vanishes {
            true
        } else {
            // compare against the action of the algebra differential of the
            // mixed generator when one is declared with the same shift
            let mixed_shift = m.mixed.as_ref().unwrap().0;
            let mut expected: Option<GradedMap> = None;
            for (gi, gen) in alg.gens.iter().enumerate() {
                if gen.grade == mixed_shift {
                    if let Some(dp) = alg.differential.get(&gi) {
                        let mut e = GradedMap::zero(
                            real.complex.space.clone(),
                            real.complex.space.clone(),
                            comm.shift,
                        );
                        for (mono, c) in dp {
                            let om = op_of_word(mono)?;
                            for (gg, b) in &om.blocks {
                                let cur = e.block(*gg).plus(&b.scaled(c));
                                e.blocks.insert(*gg, cur);
                            }
                        }
                        e.blocks.retain(|_, b| !b.is_zero());
                        expected = Some(e);
                        break;
                    }
                }
            }
            match expected {
                Some(e) => maps_agree(&comm, &e, &inner),
                None => true,
            }
        };
        (Some(sq_zero), Some((statement, curv_ok)), Some(nil))
    } else {
        (None, None, None)
    };
    Ok(EquivariantReport {
        d_squared,
        relations,
        leibniz,
        mixed_squares_to_zero,
        curvature,
        locally_nilpotent,
    })
}

fn shift_unshear(s: Trigrade, shear: i64) -> Trigrade {
    Trigrade::new(s.deg + shear * s.wt, s.wt, s.aux)
}

// ------------------------------------------------------------ side change

/// Exchange left and right structures through the principal graded
/// antiautomorphism (symbol generators change sign); defined for the
/// filtered-operator algebras and the group blocks only.  Over the
/// filtered operator algebra of rank n the exchange also twists by the
/// dualizing character, shifting every generator by (n, -n, 0) when
/// passing left to right and back again on the return trip.
pub fn side_change(m: &DGModule) -> Result<DGModule, ModuleError> {
    use crate::algebra_presentations::AlgebraKind as K;
    let allowed = matches!(
        m.algebra.kind,
        K::ReesWeyl | K::BgmBlock(_) | K::BgaBlock | K::Custom(_)
    );
    if !allowed {
        return Err(ModuleError::SideChangeUnsupported);
    }
    let rank = if matches!(m.algebra.kind, K::ReesWeyl) {
        ((m.algebra.gens.len() - 1) / 2) as i64
    } else {
        0
    };
    let orient = match m.side {
        Side::Left => 1,
        Side::Right => -1,
    };
    let twist = Trigrade::new(orient * rank, -orient * rank, 0);
    let mut out = m.clone();
    out.side = match m.side {
        Side::Left => Side::Right,
        Side::Right => Side::Left,
    };
    for g in &mut out.gens {
        g.1 = g.1.plus(twist);
    }
    out.name = format!("side_change({})", m.name);
    let sigma = |g: usize| -> Rational {
        let name = &m.algebra.gens[g].name;
        if name.starts_with("xi") {
            q(-1)
        } else {
            q(1)
        }
    };
    let mut actions = BTreeMap::new();
    for (&g, mat) in &m.actions {
        let gs = sigma(g);
        let godd = m.algebra.gens[g].is_odd();
        let mut nm: ModMat = BTreeMap::new();
        for (&(i, j), p) in mat {
            let sign = if godd && m.gens[j].1.is_odd() { q(-1) } else { q(1) };
            let scaled: Poly = p
                .iter()
                .map(|(mm, c)| (mm.clone(), c.clone() * gs.clone() * sign.clone()))
                .collect();
            nm.insert((i, j), scaled);
        }
        actions.insert(g, nm);
    }
    out.actions = actions;
    Ok(out)
}

// ------------------------------------------- semifree kernels and functors

/// A rank-one semifree kernel bimodule: left algebra tensor right algebra
/// over a shared base, with the coevaluation differential
/// d(1) = sum of a_r (x) b_r over the listed pairs.
#[derive(Clone, Debug)]
pub struct SemifreeKernel {
    pub name: String,
    pub left: Arc<AlgebraPresentation>,
    pub right: Arc<AlgebraPresentation>,
    /// base generators identified between the two algebras: (left, right)
    pub shared_base: Vec<(usize, usize)>,
    /// coevaluation pairs (left generator, right generator, coefficient)
    pub coev: Vec<(usize, usize, Rational)>,
}

/// Tensor a right module against a semifree kernel over its algebra.  The
/// output is a module over the kernel's right algebra: same generators,
/// free over the image of the module's base free variables plus all
/// right-only generators, with the coevaluation twisting the differential.
pub fn tensor_over_algebra(m: &DGModule, k: &SemifreeKernel) -> Result<DGModule, ModuleError> {
    if !Arc::ptr_eq(&m.algebra, &k.left) {
        return Err(ModuleError::TensorRefused(format!(
            "module over {} against kernel with left algebra {}",
            m.algebra.name, k.left.name
        )));
    }
    if m.side != Side::Right {
        return Err(ModuleError::SideMismatch("right".into()));
    }
    build_twisted(m, k, Twist::Tensor)
}

/// Hom from a semifree kernel into a left module over its left algebra.
/// Dual construction to the tensor: the coevaluation pairs act through the
/// module action into right-algebra free directions.
pub fn hom_over_algebra(k: &SemifreeKernel, m: &DGModule) -> Result<DGModule, ModuleError> {
    if !Arc::ptr_eq(&m.algebra, &k.left) {
        return Err(ModuleError::TensorRefused(format!(
            "module over {} against kernel with left algebra {}",
            m.algebra.name, k.left.name
        )));
    }
    if m.side != Side::Left {
        return Err(ModuleError::SideMismatch("left".into()));
    }
    build_twisted(m, k, Twist::Hom)
}

enum Twist {
    Tensor,
    Hom,
}

fn build_twisted(m: &DGModule, k: &SemifreeKernel, twist: Twist) -> Result<DGModule, ModuleError> {
    // map left base indices to right base indices
    let base_map: BTreeMap<usize, usize> = k.shared_base.iter().cloned().collect();
    // output free vars: shared-base images of the module's free vars, plus
    // every right generator that is not a base generator
    let mut free: Vec<usize> = vec![];
    for &fv in &m.free_vars {
        if let Some(&r) = base_map.get(&fv) {
            free.push(r);
        }
        // non-base free vars of the module are consumed by the kernel
    }
    for r in 0..k.right.gens.len() {
        if !k.shared_base.iter().any(|(_, rr)| *rr == r) {
            free.push(r);
        }
    }
    free.sort_unstable();
    free.dedup();
    let right = k.right.clone();
    // kernels may only pair against stored actions, never against a free
    // direction of the module
    for (a, _, _) in &k.coev {
        let a = *a;
        if m.is_free_var(a) {
            return Err(ModuleError::TensorRefused(format!(
                "kernel pairs against {}, a free variable of the module",
                m.algebra.gens[a].name
            )));
        }
    }
    let verb = match twist {
        Twist::Tensor => "(x)",
        Twist::Hom => "hom",
    };
    let mut out = DGModule::new(
        &format!("{} {} {}", m.name, verb, k.name),
        right,
        match twist {
            Twist::Tensor => Side::Right,
            Twist::Hom => Side::Left,
        },
        m.gens.clone(),
        free,
    );
    // transported module differential: entries must be supported on shared
    // base free vars (the kernel consumes everything else)
    let transport = |p: &Poly| -> Result<Poly, ModuleError> {
        let mut np = poly_zero();
        for (mono, c) in p {
            let mut nm: Monomial = vec![];
            for (g, e) in mono {
                match base_map.get(g) {
                    Some(&r) => nm.push((r, *e)),
                    None => {
                        return Err(ModuleError::TensorRefused(format!(
                            "module entry involves {}, which the kernel does not share",
                            m.algebra.gens[*g].name
                        )))
                    }
                }
            }
            nm.sort_unstable_by_key(|(i, _)| *i);
            poly_add_into(&mut np, nm, c.clone());
        }
        Ok(np)
    };
    let mut dmat: ModMat = BTreeMap::new();
    for (&(i, j), p) in &m.differential {
        dmat.insert((i, j), transport(p)?);
    }
    // coevaluation twist: for each pair (a, b, c), the action of a on the
    // module lands in the b-free direction of the output
    for (a, b, coeff) in &k.coev {
        let (a, b) = (*a, *b);
        let Some(mat) = m.actions.get(&a) else { continue };
        for (&(i, j), p) in mat {
            let base = transport(p)?;
            let sign = match twist {
                Twist::Tensor => {
                    if m.gens[j].1.is_odd() {
                        q(-1)
                    } else {
                        q(1)
                    }
                }
                Twist::Hom => q(1),
            };
            for (mono, c) in &base {
                let mut nm = mono.clone();
                nm.push((b, 1));
                nm.sort_unstable_by_key(|(gi, _)| *gi);
                // collapse duplicate indices
                let nm = recompress(nm);
                let entry = dmat.entry((i, j)).or_insert_with(poly_zero);
                poly_add_into(entry, nm, c.clone() * coeff.clone() * sign.clone());
            }
        }
    }
    out.differential = dmat;
    // transported actions for shared-base generators that are not free
    for (&g, mat) in &m.actions {
        if let Some(&r) = base_map.get(&g) {
            if out.is_free_var(r) {
                continue;
            }
            let mut nm: ModMat = BTreeMap::new();
            for (&(i, j), p) in mat {
                nm.insert((i, j), transport(p)?);
            }
            out.actions.insert(r, nm);
        }
    }
    out.check_structure()?;
    Ok(out)
}

fn recompress(m: Monomial) -> Monomial {
    let mut out: Monomial = vec![];
    for (g, e) in m {
        match out.last_mut() {
            Some((lg, le)) if *lg == g => *le += e,
            _ => out.push((g, e)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra_presentations::{bgm_block, bgm_dual_block, mixed_de_rham, rees_weyl};

    fn free_rank_one(alg: Arc<AlgebraPresentation>) -> DGModule {
        let n = alg.gens.len();
        DGModule::new(
            "free",
            alg,
            Side::Left,
            vec![("e".into(), Trigrade::default())],
            (0..n).collect(),
        )
    }

    #[test]
    fn free_module_realizes_algebra_pieces() {
        let alg = Arc::new(rees_weyl(1));
        let m = free_rank_one(alg.clone());
        let w = Window::new(-2, 2, -3, 3, 4);
        let real = m.realize(&w).unwrap();
        for wt in 0..=3i64 {
            for aux in 0..=4i64 {
                let g = Trigrade::new(0, wt, aux);
                let expect = alg.graded_piece(g).unwrap().len();
                assert_eq!(real.complex.space.dim(g), expect, "at {}", g);
            }
        }
        // the operator piece (0,1,0) is {t, x xi}
        assert_eq!(real.complex.space.dim(Trigrade::new(0, 1, 0)), 2);
    }

    #[test]
    fn free_module_over_dual_block() {
        let alg = Arc::new(bgm_dual_block(1));
        let t = alg.gen_index("t").unwrap();
        let m = DGModule::new(
            "free over the parameter",
            alg,
            Side::Left,
            vec![("e".into(), Trigrade::default())],
            vec![t],
        );
        let w = Window::new(-2, 2, 0, 4, 2);
        let real = m.realize(&w).unwrap();
        for k in 0..=4i64 {
            assert_eq!(real.complex.space.dim(Trigrade::new(0, k, 0)), 1);
        }
        assert_eq!(real.complex.space.total_dim(), 5);
    }

    #[test]
    fn weyl_crossing_operator() {
        // right module over filtered operators, free over symbol and
        // parameter, with the coordinate acting by zero on the generator:
        // e xi^b t^c . x picks up the commutator b e xi^{b-1} t^{c+1}
        let alg = Arc::new(rees_weyl(1));
        let x = alg.gen_index("x").unwrap();
        let xi = alg.gen_index("xi").unwrap();
        let t = alg.gen_index("t").unwrap();
        let mut m = DGModule::new(
            "coordinate torsion",
            alg,
            Side::Right,
            vec![("e".into(), Trigrade::default())],
            vec![xi, t],
        );
        m.actions.insert(x, BTreeMap::new());
        let terms = m.apply_gen(x, &vec![(xi, 2)], 0, 0).unwrap();
        assert_eq!(terms.len(), 1);
        let (mono, j, c) = &terms[0];
        assert_eq!(*j, 0);
        assert_eq!(c, &q(2));
        assert_eq!(*mono, vec![(xi, 1), (t, 1)]);
    }

    #[test]
    fn mixed_crossing_left() {
        // left module over mixed forms, free over the coordinate, with the
        // operator acting by zero: delta . (x^2 e) = 2 x dx e
        let alg = Arc::new(mixed_de_rham(1));
        let x = alg.gen_index("x").unwrap();
        let dx = alg.gen_index("dx").unwrap();
        let delta = alg.gen_index("delta").unwrap();
        let mut m = DGModule::new(
            "forms torsion",
            alg.clone(),
            Side::Left,
            vec![("e".into(), Trigrade::default())],
            vec![x],
        );
        m.actions.insert(dx, BTreeMap::new());
        m.actions.insert(delta, BTreeMap::new());
        let terms = m.apply_gen(delta, &vec![(x, 2)], 0, 0).unwrap();
        // delta x^2 e = x^2 delta e + 2 x dx e; both delta and dx act by
        // zero on e, but dx is not free, so only terms surviving the action
        // remain: here both vanish
        assert!(terms.is_empty());
        // with dx acting as identity-like map to a second generator the
        // derivation term survives
        let mut m2 = DGModule::new(
            "forms with one-form action",
            alg.clone(),
            Side::Left,
            vec![("e".into(), Trigrade::default()), ("f".into(), Trigrade::new(1, -1, 1))],
            vec![x],
        );
        let mut dxmat: ModMat = BTreeMap::new();
        dxmat.insert((1, 0), poly_term(vec![], q(1)));
        m2.actions.insert(dx, dxmat);
        m2.actions.insert(delta, BTreeMap::new());
        let terms = m2.apply_gen(delta, &vec![(x, 2)], 0, 0).unwrap();
        assert_eq!(terms.len(), 1);
        let (mono, j, c) = &terms[0];
        assert_eq!((*j, c), (1, &q(2)));
        assert_eq!(*mono, vec![(x, 1)]);
    }

    #[test]
    fn skyscraper_resolution_validates() {
        let n = 2i64;
        let alg = Arc::new(bgm_block(n));
        let x = alg.gen_index("x").unwrap();
        let delta = alg.gen_index("delta").unwrap();
        let mut m = DGModule::new(
            "skyscraper resolution",
            alg.clone(),
            Side::Left,
            vec![
                ("e0".into(), Trigrade::new(0, n, 0)),
                ("e1".into(), Trigrade::new(-1, n - 1, 0)),
            ],
            vec![x],
        );
        let mut d: ModMat = BTreeMap::new();
        d.insert((0, 1), poly_term(vec![(x, 1)], q(1)));
        m.differential = d;
        let mut dm: ModMat = BTreeMap::new();
        dm.insert((1, 0), poly_term(vec![], q(n)));
        m.actions.insert(delta, dm.clone());
        m.mixed = Some((alg.gens[delta].grade, dm));
        let w = Window::new(-4, 4, -4, 4, 2);
        let report = validate_equivariant(&m, &w).unwrap();
        assert!(report.d_squared);
        assert!(report.ok(), "{:?}", report);
        assert_eq!(report.curvature.as_ref().map(|(_, b)| *b), Some(true));
    }

    #[test]
    fn side_change_is_involutive() {
        let alg = Arc::new(rees_weyl(1));
        let x = alg.gen_index("x").unwrap();
        let xi = alg.gen_index("xi").unwrap();
        let t = alg.gen_index("t").unwrap();
        let mut m = DGModule::new(
            "torsion",
            alg,
            Side::Right,
            vec![("e".into(), Trigrade::default())],
            vec![xi, t],
        );
        m.actions.insert(x, BTreeMap::new());
        let s = side_change(&m).unwrap();
        assert_eq!(s.side, Side::Left);
        assert_eq!(s.gens[0].1, Trigrade::new(-1, 1, 0));
        let ss = side_change(&s).unwrap();
        assert_eq!(ss.side, m.side);
        assert_eq!(ss.gens, m.gens);
        assert_eq!(ss.actions, m.actions);
        assert_eq!(ss.differential, m.differential);
    }

    #[test]
    fn side_change_profiles_match_the_frozen_tables() {
        use crate::exact_bigraded_linalg::cohomology_dims;
        let secs = crate::catalogue::load_fixture(None, "side_change").unwrap();
        let alg = Arc::new(rees_weyl(1));
        let mut structure = DGModule::new(
            "structure",
            alg,
            Side::Left,
            vec![("one".into(), Trigrade::default())],
            vec![0, 2],
        );
        structure.actions.insert(1, BTreeMap::new());
        let mut seen = 0;
        for sec in &secs {
            // the twist shifts every weight down by one, so the comparison
            // window travels with it
            let (module, w) = if sec.header.contains("structure sheaf") {
                (structure.clone(), Window::standard())
            } else if sec.header.contains("dualizing twist") {
                (side_change(&structure).unwrap(), Window::new(-8, 8, -7, 5, 8))
            } else {
                continue;
            };
            seen += 1;
            let real = module.realize(&w).unwrap();
            let h = cohomology_dims(&real.complex, &w).unwrap();
            let expected: BTreeMap<Trigrade, usize> =
                sec.pieces.iter().map(|(&g, &(dim, _))| (g, dim)).collect();
            assert_eq!(h.certified_nonzero(), expected, "{}", sec.header);
        }
        assert_eq!(seen, 2);
    }

    #[test]
    fn realize_rejects_bad_entries() {
        let alg = Arc::new(rees_weyl(1));
        let x = alg.gen_index("x").unwrap();
        let xi = alg.gen_index("xi").unwrap();
        let t = alg.gen_index("t").unwrap();
        let mut m = DGModule::new(
            "broken",
            alg,
            Side::Left,
            vec![("e".into(), Trigrade::default())],
            vec![xi, t],
        );
        // differential entry involving the non-free coordinate
        let mut d: ModMat = BTreeMap::new();
        d.insert((0, 0), poly_term(vec![(x, 1)], q(1)));
        m.differential = d;
        assert!(matches!(m.check_structure(), Err(ModuleError::EntryNotFree(..))));
    }
}
