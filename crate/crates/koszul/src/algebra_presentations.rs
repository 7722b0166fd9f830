//! Presented trigraded algebras with normal-form rewriting.
//!
//! An algebra is a list of generators in a fixed normal order together with
//! swap rules for out-of-order adjacent pairs and an optional differential.
//! Multiplication rewrites words to the normal basis (sorted exponent
//! monomials); finiteness of a graded piece is certified by an explicit
//! positivity functional before enumeration.

use crate::exact_bigraded_linalg::{q, Rational, Trigrade};
use num::traits::Zero;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum AlgebraError {
    #[error("graded piece at {0} cannot be certified finite for algebra {1}")]
    InfinitePiece(Trigrade, String),
    #[error("rewrite rule for {0} is not homogeneous")]
    InhomogeneousRule(String),
    #[error("differential of {0} is not homogeneous of shift (+1,0,0)")]
    InhomogeneousDifferential(String),
    #[error("rewriting is not confluent on the triple {0}")]
    NotConfluent(String),
    #[error("Leibniz rule fails on the pair {0}")]
    LeibnizFailure(String),
    #[error("differential does not square to zero on generator {0}")]
    DifferentialSquare(String),
    #[error("associated graded is not commutative: rule for {0}")]
    NotCommutative(String),
    #[error("unknown generator {0}")]
    UnknownGenerator(String),
}

/// A single generator; Koszul parity is derived from the degree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generator {
    pub name: String,
    pub grade: Trigrade,
}

impl Generator {
    pub fn new(name: &str, deg: i64, wt: i64, aux: i64) -> Self {
        Generator { name: name.into(), grade: Trigrade::new(deg, wt, aux) }
    }

    pub fn is_odd(&self) -> bool {
        self.grade.is_odd()
    }
}

/// Families with dedicated constructors; everything else is custom.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AlgebraKind {
    Sym,
    Exterior,
    MixedDeRham,
    ReesWeyl,
    BgmBlock(i64),
    BgaBlock,
    Custom(String),
}

/// Normal monomial: exponents over generators, indices strictly increasing,
/// odd generators with exponent at most one.
pub type Monomial = Vec<(usize, u32)>;

/// Polynomial in the normal basis.
pub type Poly = BTreeMap<Monomial, Rational>;

pub fn poly_zero() -> Poly {
    BTreeMap::new()
}

pub fn poly_one() -> Poly {
    let mut p = BTreeMap::new();
    p.insert(vec![], q(1));
    p
}

pub fn poly_term(m: Monomial, c: Rational) -> Poly {
    let mut p = BTreeMap::new();
    if !c.is_zero() {
        p.insert(m, c);
    }
    p
}

pub fn poly_add_into(p: &mut Poly, m: Monomial, c: Rational) {
    if c.is_zero() {
        return;
    }
    let cur = p.remove(&m).unwrap_or_else(Rational::zero);
    let nv = cur + c;
    if !nv.is_zero() {
        p.insert(m, nv);
    }
}

pub fn poly_sum(a: &Poly, b: &Poly) -> Poly {
    let mut out = a.clone();
    for (m, c) in b {
        poly_add_into(&mut out, m.clone(), c.clone());
    }
    out
}

pub fn poly_scale(p: &Poly, s: &Rational) -> Poly {
    if s.is_zero() {
        return poly_zero();
    }
    p.iter().map(|(m, c)| (m.clone(), c.clone() * s.clone())).collect()
}

/// A presented trigraded algebra.
#[derive(Clone, Debug)]
pub struct AlgebraPresentation {
    pub name: String,
    pub kind: AlgebraKind,
    pub gens: Vec<Generator>,
    /// Rewrite rule for the out-of-order product g_j * g_i (j > i), as a
    /// normal-form polynomial.  Absent means the graded-commutative swap.
    pub swaps: BTreeMap<(usize, usize), Poly>,
    /// d(g_i) in normal form; absent entries are zero.
    pub differential: BTreeMap<usize, Poly>,
}

impl AlgebraPresentation {
    pub fn new(name: &str, kind: AlgebraKind, gens: Vec<Generator>) -> Self {
        AlgebraPresentation {
            name: name.into(),
            kind,
            gens,
            swaps: BTreeMap::new(),
            differential: BTreeMap::new(),
        }
    }

    pub fn gen_index(&self, name: &str) -> Result<usize, AlgebraError> {
        self.gens
            .iter()
            .position(|g| g.name == name)
            .ok_or_else(|| AlgebraError::UnknownGenerator(name.into()))
    }

    pub fn grade_of_monomial(&self, m: &Monomial) -> Trigrade {
        let mut g = Trigrade::default();
        for (i, e) in m {
            let gg = self.gens[*i].grade;
            g = g.plus(Trigrade::new(
                gg.deg * *e as i64,
                gg.wt * *e as i64,
                gg.aux * *e as i64,
            ));
        }
        g
    }

    pub fn monomial_is_odd(&self, m: &Monomial) -> bool {
        self.grade_of_monomial(m).is_odd()
    }

    /// The default graded-commutative swap for g_j * g_i.
    fn default_swap(&self, j: usize, i: usize) -> Poly {
        let sign = if self.gens[j].is_odd() && self.gens[i].is_odd() { q(-1) } else { q(1) };
        poly_term(normal_sorted(vec![(i, 1), (j, 1)]), sign)
    }

    fn swap_rule(&self, j: usize, i: usize) -> Poly {
        match self.swaps.get(&(j, i)) {
            Some(p) => p.clone(),
            None => self.default_swap(j, i),
        }
    }

    /// Multiply a normal monomial by a single generator on the right.
    fn mul_norm_gen(&self, m: &Monomial, g: usize) -> Poly {
        match m.last() {
            None => poly_term(vec![(g, 1)], q(1)),
            Some(&(last, e)) => {
                if last < g {
                    let mut out = m.clone();
                    out.push((g, 1));
                    poly_term(out, q(1))
                } else if last == g {
                    if self.gens[g].is_odd() {
                        poly_zero()
                    } else {
                        let mut out = m.clone();
                        out.last_mut().unwrap().1 += 1;
                        poly_term(out, q(1))
                    }
                } else {
                    // m = m' * last^e with last > g: rewrite last * g
                    let mut head = m.clone();
                    if e == 1 {
                        head.pop();
                    } else {
                        head.last_mut().unwrap().1 -= 1;
                    }
                    let rule = self.swap_rule(last, g);
                    self.mul_mono_poly(&head, &rule)
                }
            }
        }
    }

    fn mul_mono_poly(&self, m: &Monomial, p: &Poly) -> Poly {
        let mut out = poly_zero();
        for (n, c) in p {
            let prod = self.mul_mono(m, n);
            for (k, v) in prod {
                poly_add_into(&mut out, k, v * c.clone());
            }
        }
        out
    }

    /// Product of two normal monomials, rewritten to the normal basis.
    pub fn mul_mono(&self, a: &Monomial, b: &Monomial) -> Poly {
        let mut acc = poly_term(a.clone(), q(1));
        for (g, e) in b {
            for _ in 0..*e {
                let mut next = poly_zero();
                for (m, c) in &acc {
                    let p = self.mul_norm_gen(m, *g);
                    for (k, v) in p {
                        poly_add_into(&mut next, k, v * c.clone());
                    }
                }
                acc = next;
            }
        }
        acc
    }

    pub fn mul_poly(&self, a: &Poly, b: &Poly) -> Poly {
        let mut out = poly_zero();
        for (m, cm) in a {
            for (n, cn) in b {
                let p = self.mul_mono(m, n);
                for (k, v) in p {
                    poly_add_into(&mut out, k, v * cm.clone() * cn.clone());
                }
            }
        }
        out
    }

    /// Rewrite an arbitrary word of generator powers to the normal basis.
    pub fn normal_form(&self, word: &[(usize, u32)]) -> Poly {
        let mut acc = poly_one();
        for &(g, e) in word {
            let m: Monomial = vec![(g, e)];
            let mut next = poly_zero();
            for (mm, c) in &acc {
                let p = self.mul_mono(mm, &m);
                for (k, v) in p {
                    poly_add_into(&mut next, k, v * c.clone());
                }
            }
            acc = next;
        }
        acc
    }

    /// Differential extended to a monomial by the Leibniz rule.
    pub fn d_mono(&self, m: &Monomial) -> Poly {
        let mut out = poly_zero();
        // flatten to a list of single-generator factors
        let mut factors = vec![];
        for (g, e) in m {
            for _ in 0..*e {
                factors.push(*g);
            }
        }
        for (k, g) in factors.iter().enumerate() {
            let Some(dg) = self.differential.get(g) else { continue };
            let prefix_deg: i64 = factors[..k].iter().map(|i| self.gens[*i].grade.deg).sum();
            let sign = if prefix_deg.rem_euclid(2) == 1 { q(-1) } else { q(1) };
            // prefix * d(g) * suffix
            let prefix: Monomial = compress(&factors[..k]);
            let suffix: Monomial = compress(&factors[k + 1..]);
            let left = self.mul_mono_poly(&prefix, dg);
            for (mm, c) in &left {
                let prod = self.mul_mono(mm, &suffix);
                for (kk, v) in prod {
                    poly_add_into(&mut out, kk, v * c.clone() * sign.clone());
                }
            }
        }
        out
    }

    pub fn d_poly(&self, p: &Poly) -> Poly {
        let mut out = poly_zero();
        for (m, c) in p {
            let dm = self.d_mono(m);
            for (k, v) in dm {
                poly_add_into(&mut out, k, v * c.clone());
            }
        }
        out
    }

    /// A linear functional strictly positive on every even generator grade,
    /// if one exists; certifies that all graded pieces are finite.  Odd
    /// generators carry exponent at most one, so their functional values are
    /// unconstrained.
    pub fn positivity_functional(&self) -> Option<(i64, i64, i64)> {
        let idx: Vec<usize> = (0..self.gens.len()).collect();
        self.positivity_over(&idx)
    }

    /// All normal monomials of the given trigrade, in depth-first order
    /// over the generator list.  Errors when finiteness cannot be certified.
    pub fn graded_piece(&self, g: Trigrade) -> Result<Vec<Monomial>, AlgebraError> {
        let idx: Vec<usize> = (0..self.gens.len()).collect();
        self.graded_piece_over(&idx, g)
    }

    /// Same, restricted to a sub-list of generators.
    pub fn graded_piece_over(
        &self,
        subset: &[usize],
        g: Trigrade,
    ) -> Result<Vec<Monomial>, AlgebraError> {
        let phi = self.positivity_over(subset).ok_or_else(|| {
            AlgebraError::InfinitePiece(g, self.name.clone())
        })?;
        let cost_of = |i: usize| {
            let gg = self.gens[i].grade;
            phi.0 * gg.deg + phi.1 * gg.wt + phi.2 * gg.aux
        };
        // the least achievable functional value over each suffix: even
        // generators contribute at least zero, odd ones their (possibly
        // negative) cost at most once
        let mut floor = vec![0i64; subset.len() + 1];
        for k in (0..subset.len()).rev() {
            let c = cost_of(subset[k]);
            floor[k] = floor[k + 1] + if self.gens[subset[k]].is_odd() && c < 0 { c } else { 0 };
        }
        let budget = phi.0 * g.deg + phi.1 * g.wt + phi.2 * g.aux;
        let mut out = vec![];
        let mut cur: Monomial = vec![];
        self.enumerate(subset, 0, g, budget, &phi, &floor, &mut cur, &mut out);
        Ok(out)
    }

    fn positivity_over(&self, subset: &[usize]) -> Option<(i64, i64, i64)> {
        for cd in -4..=4i64 {
            for cw in -4..=4i64 {
                for ca in -4..=4i64 {
                    if subset.iter().all(|&i| {
                        let g = &self.gens[i];
                        g.is_odd()
                            || cd * g.grade.deg + cw * g.grade.wt + ca * g.grade.aux >= 1
                    }) {
                        return Some((cd, cw, ca));
                    }
                }
            }
        }
        None
    }

    #[allow(clippy::too_many_arguments)]
    fn enumerate(
        &self,
        subset: &[usize],
        k: usize,
        remaining: Trigrade,
        budget: i64,
        phi: &(i64, i64, i64),
        floor: &[i64],
        cur: &mut Monomial,
        out: &mut Vec<Monomial>,
    ) {
        if budget < floor[k] {
            return;
        }
        if k == subset.len() {
            if remaining == Trigrade::default() {
                out.push(cur.clone());
            }
            return;
        }
        let gi = subset[k];
        let gg = self.gens[gi].grade;
        let cost = phi.0 * gg.deg + phi.1 * gg.wt + phi.2 * gg.aux;
        // even costs are at least one, so the headroom above the suffix
        // floor bounds the exponent
        let emax = if self.gens[gi].is_odd() {
            1
        } else {
            (budget - floor[k + 1]).div_euclid(cost).max(0) as u32
        };
        for e in 0..=emax {
            let rem = remaining.minus(Trigrade::new(
                gg.deg * e as i64,
                gg.wt * e as i64,
                gg.aux * e as i64,
            ));
            if e > 0 {
                cur.push((gi, e));
            }
            self.enumerate(subset, k + 1, rem, budget - cost * e as i64, phi, floor, cur, out);
            if e > 0 {
                cur.pop();
            }
        }
    }

    pub fn mono_string(&self, m: &Monomial) -> String {
        if m.is_empty() {
            return "1".into();
        }
        m.iter()
            .map(|(i, e)| format!("{}^{}", self.gens[*i].name, e))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn poly_string(&self, p: &Poly) -> String {
        if p.is_empty() {
            return "0".into();
        }
        p.iter()
            .map(|(m, c)| {
                if m.is_empty() {
                    format!("{}", c)
                } else {
                    format!("{} {}", c, self.mono_string(m))
                }
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }

    // ------------------------------------------------------------- checks

    /// Every swap rule must preserve the trigrade of the swapped pair and
    /// the differential must be homogeneous of shift (+1,0,0).
    pub fn check_homogeneous(&self) -> Result<(), AlgebraError> {
        for ((j, i), p) in &self.swaps {
            let expect = self.gens[*j].grade.plus(self.gens[*i].grade);
            for m in p.keys() {
                if self.grade_of_monomial(m) != expect {
                    return Err(AlgebraError::InhomogeneousRule(format!(
                        "{} * {}",
                        self.gens[*j].name, self.gens[*i].name
                    )));
                }
            }
        }
        for (i, p) in &self.differential {
            let expect = self.gens[*i].grade.plus(Trigrade::new(1, 0, 0));
            for m in p.keys() {
                if self.grade_of_monomial(m) != expect {
                    return Err(AlgebraError::InhomogeneousDifferential(
                        self.gens[*i].name.clone(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Associativity of the rewriting on every generator triple.
    pub fn check_confluence(&self) -> Result<(), AlgebraError> {
        let n = self.gens.len();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let ab = self.normal_form(&[(a, 1), (b, 1)]);
                    let left = self.mul_poly(&ab, &poly_term(vec![(c, 1)], q(1)));
                    let bc = self.normal_form(&[(b, 1), (c, 1)]);
                    let right = self.mul_mono_poly(&vec![(a, 1)], &bc);
                    if left != right {
                        return Err(AlgebraError::NotConfluent(format!(
                            "({}, {}, {})",
                            self.gens[a].name, self.gens[b].name, self.gens[c].name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// d(ab) = da b + (-1)^{|a|} a db on every ordered generator pair.
    pub fn check_leibniz(&self) -> Result<(), AlgebraError> {
        let n = self.gens.len();
        for a in 0..n {
            for b in 0..n {
                let ab = self.normal_form(&[(a, 1), (b, 1)]);
                let lhs = self.d_poly(&ab);
                let da = self.differential.get(&a).cloned().unwrap_or_default();
                let db = self.differential.get(&b).cloned().unwrap_or_default();
                let mut rhs = self.mul_poly(&da, &poly_term(vec![(b, 1)], q(1)));
                let sign = if self.gens[a].is_odd() { q(-1) } else { q(1) };
                let part = self.mul_mono_poly(&vec![(a, 1)], &db);
                rhs = poly_sum(&rhs, &poly_scale(&part, &sign));
                if lhs != rhs {
                    return Err(AlgebraError::LeibnizFailure(format!(
                        "({}, {})",
                        self.gens[a].name, self.gens[b].name
                    )));
                }
            }
        }
        Ok(())
    }

    /// d^2 = 0 on every generator.
    pub fn check_d_squared(&self) -> Result<(), AlgebraError> {
        for (i, p) in &self.differential {
            if !self.d_poly(p).is_empty() {
                return Err(AlgebraError::DifferentialSquare(self.gens[*i].name.clone()));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), AlgebraError> {
        self.check_homogeneous()?;
        self.check_confluence()?;
        self.check_leibniz()?;
        self.check_d_squared()
    }
}

impl fmt::Display for AlgebraPresentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "algebra {}", self.name)?;
        for g in &self.gens {
            writeln!(f, "gen {} d={} w={} a={}", g.name, g.grade.deg, g.grade.wt, g.grade.aux)?;
        }
        Ok(())
    }
}

fn compress(factors: &[usize]) -> Monomial {
    let mut out: Monomial = vec![];
    for &g in factors {
        match out.last_mut() {
            Some((lg, e)) if *lg == g => *e += 1,
            _ => out.push((g, 1)),
        }
    }
    out
}

fn normal_sorted(mut m: Monomial) -> Monomial {
    m.sort_by_key(|(i, _)| *i);
    m
}

// ----------------------------------------------------------- constructors

/// Parameters for the catalogue algebra builders.
#[derive(Clone, Debug, Default)]
pub struct AlgebraParams {
    /// Number of base coordinates (dimension of the underlying space).
    pub n: usize,
    /// Block label for the one-dimensional group blocks.
    pub block: i64,
}

/// Build one of the standard algebra presentations.
pub fn build_catalogue_algebra(kind: &AlgebraKind, params: &AlgebraParams) -> AlgebraPresentation {
    match kind {
        AlgebraKind::Sym => {
            let gens = (1..=params.n)
                .map(|i| Generator::new(&format!("x{}", i), 0, 0, 1))
                .collect();
            AlgebraPresentation::new("sym", AlgebraKind::Sym, gens)
        }
        AlgebraKind::Exterior => {
            let gens = (1..=params.n)
                .map(|i| Generator::new(&format!("e{}", i), 1, -1, 1))
                .collect();
            AlgebraPresentation::new("exterior", AlgebraKind::Exterior, gens)
        }
        AlgebraKind::MixedDeRham => mixed_de_rham(params.n),
        AlgebraKind::ReesWeyl => rees_weyl(params.n),
        AlgebraKind::BgmBlock(nn) => bgm_block(*nn),
        AlgebraKind::BgaBlock => bga_block(),
        AlgebraKind::Custom(name) => match name.as_str() {
            "bgm_dual" => bgm_dual_block(params.block),
            "bga_dual" => bga_dual_block(),
            other => panic!("no custom constructor named {}", other),
        },
    }
}

/// Mixed differential forms with the interpolation operator: base
/// coordinates, their one-forms, and the odd operator whose commutator
/// with a coordinate produces its one-form.
pub fn mixed_de_rham(n: usize) -> AlgebraPresentation {
    let mut gens = vec![];
    for i in 1..=n {
        gens.push(Generator::new(&name_i("x", i, n), 0, 0, 1));
    }
    for i in 1..=n {
        gens.push(Generator::new(&name_i("dx", i, n), 1, -1, 1));
    }
    gens.push(Generator::new("delta", 1, -1, 0));
    let mut a = AlgebraPresentation::new(
        &format!("mixed forms on affine {}-space", n),
        AlgebraKind::MixedDeRham,
        gens,
    );
    let delta = 2 * n;
    for i in 0..n {
        // delta * x_i = x_i delta + dx_i
        let mut p = poly_term(normal_sorted(vec![(i, 1), (delta, 1)]), q(1));
        poly_add_into(&mut p, vec![(n + i, 1)], q(1));
        a.swaps.insert((delta, i), p);
    }
    a
}

/// Filtered differential operators in Rees form: base coordinates, the
/// symbol generators, and the central filtration parameter t with the
/// commutation rule symbol * coordinate = coordinate * symbol + t.
pub fn rees_weyl(n: usize) -> AlgebraPresentation {
    let mut gens = vec![];
    for i in 1..=n {
        gens.push(Generator::new(&name_i("x", i, n), 0, 0, 1));
    }
    for i in 1..=n {
        gens.push(Generator::new(&name_i("xi", i, n), 0, 1, -1));
    }
    gens.push(Generator::new("t", 0, 1, 0));
    let mut a = AlgebraPresentation::new(
        &format!("filtered operators on affine {}-space", n),
        AlgebraKind::ReesWeyl,
        gens,
    );
    let t = 2 * n;
    for i in 0..n {
        // xi_i * x_i = x_i xi_i + t
        let mut p = poly_term(normal_sorted(vec![(i, 1), (n + i, 1)]), q(1));
        poly_add_into(&mut p, vec![(t, 1)], q(1));
        a.swaps.insert((n + i, i), p);
    }
    a
}

/// Multiplicative block of label n: one coordinate of weight -1 and the
/// odd operator with d(delta) = n x.
pub fn bgm_block(n: i64) -> AlgebraPresentation {
    let gens = vec![Generator::new("x", 0, -1, 0), Generator::new("delta", -1, -1, 0)];
    let mut a = AlgebraPresentation::new(
        &format!("multiplicative block n={}", n),
        AlgebraKind::BgmBlock(n),
        gens,
    );
    if n != 0 {
        a.differential.insert(1, poly_term(vec![(0, 1)], q(n)));
    }
    a
}

/// Dual of the multiplicative block: the parameter t and the odd operator
/// with d(h) = n t.
pub fn bgm_dual_block(n: i64) -> AlgebraPresentation {
    let gens = vec![Generator::new("h", -1, 1, 0), Generator::new("t", 0, 1, 0)];
    let mut a = AlgebraPresentation::new(
        &format!("dual multiplicative block n={}", n),
        AlgebraKind::Custom("bgm_dual".into()),
        gens,
    );
    if n != 0 {
        a.differential.insert(0, poly_term(vec![(1, 1)], q(n)));
    }
    a
}

/// Additive block: two coordinates of opposite weight and the odd operator
/// with d(delta) = x y.  Graded pieces are genuinely infinite here, which
/// the finiteness certificate reports as an error.
pub fn bga_block() -> AlgebraPresentation {
    let gens = vec![
        Generator::new("x", 0, -1, 0),
        Generator::new("y", 0, 1, 0),
        Generator::new("delta", -1, 0, 0),
    ];
    let mut a =
        AlgebraPresentation::new("additive block", AlgebraKind::BgaBlock, gens);
    a.differential.insert(2, poly_term(normal_sorted(vec![(0, 1), (1, 1)]), q(1)));
    a
}

/// Dual of the additive block: the parameter t alone carries the algebra;
/// the dual odd operator only exists as a module-level operator.
pub fn bga_dual_block() -> AlgebraPresentation {
    let gens = vec![Generator::new("t", 0, 1, 0)];
    AlgebraPresentation::new("dual additive block", AlgebraKind::Custom("bga_dual".into()), gens)
}

fn name_i(stem: &str, i: usize, n: usize) -> String {
    if n == 1 {
        stem.into()
    } else {
        format!("{}{}", stem, i)
    }
}

/// Set the filtration parameter to zero and verify that the result is
/// graded-commutative; returns the commutative presentation.
pub fn associated_graded(a: &AlgebraPresentation) -> Result<AlgebraPresentation, AlgebraError> {
    let t_idx = a.gens.iter().position(|g| g.name == "t" || g.name == "u");
    let mut out = a.clone();
    out.name = format!("gr({})", a.name);
    out.kind = AlgebraKind::Custom(format!("gr {}", kind_tag(&a.kind)));
    if let Some(t) = t_idx {
        for p in out.swaps.values_mut() {
            p.retain(|m, _| !m.iter().any(|(i, _)| *i == t));
        }
        out.swaps.retain(|_, p| !p.is_empty());
    }
    for ((j, i), p) in &out.swaps {
        let expect = out.default_swap(*j, *i);
        if *p != expect {
            return Err(AlgebraError::NotCommutative(format!(
                "{} * {}",
                out.gens[*j].name, out.gens[*i].name
            )));
        }
    }
    Ok(out)
}

pub fn kind_tag(k: &AlgebraKind) -> String {
    match k {
        AlgebraKind::Sym => "sym".into(),
        AlgebraKind::Exterior => "exterior".into(),
        AlgebraKind::MixedDeRham => "mixed_de_rham".into(),
        AlgebraKind::ReesWeyl => "rees_weyl".into(),
        AlgebraKind::BgmBlock(n) => format!("bgm_block({})", n),
        AlgebraKind::BgaBlock => "bga_block".into(),
        AlgebraKind::Custom(s) => s.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weyl_rewrite() {
        let a = rees_weyl(1);
        let x = a.gen_index("x").unwrap();
        let xi = a.gen_index("xi").unwrap();
        // xi * x^2 = x^2 xi + 2 x t
        let p = a.normal_form(&[(xi, 1), (x, 2)]);
        let t = a.gen_index("t").unwrap();
        let mut expect = poly_term(vec![(x, 2), (xi, 1)], q(1));
        poly_add_into(&mut expect, vec![(x, 1), (t, 1)], q(2));
        assert_eq!(p, expect);
    }

    #[test]
    fn mixed_rewrite() {
        let a = mixed_de_rham(1);
        let x = a.gen_index("x").unwrap();
        let dx = a.gen_index("dx").unwrap();
        let delta = a.gen_index("delta").unwrap();
        // delta * x^2 = x^2 delta + 2 x dx
        let p = a.normal_form(&[(delta, 1), (x, 2)]);
        let mut expect = poly_term(vec![(x, 2), (delta, 1)], q(1));
        poly_add_into(&mut expect, vec![(x, 1), (dx, 1)], q(2));
        assert_eq!(p, expect);
        assert_eq!(a.poly_string(&p), "2 x^1 dx^1 + 1 x^2 delta^1");
    }

    #[test]
    fn odd_squares_vanish() {
        let a = mixed_de_rham(2);
        let dx1 = a.gen_index("dx1").unwrap();
        assert!(a.normal_form(&[(dx1, 1), (dx1, 1)]).is_empty());
        let delta = a.gen_index("delta").unwrap();
        assert!(a.normal_form(&[(delta, 1), (delta, 1)]).is_empty());
    }

    #[test]
    fn operator_piece_enumeration() {
        let a = rees_weyl(1);
        let piece = a.graded_piece(Trigrade::new(0, 1, 0)).unwrap();
        let strings: Vec<String> = piece.iter().map(|m| a.mono_string(m)).collect();
        assert_eq!(strings, vec!["t^1", "x^1 xi^1"]);
    }

    #[test]
    fn form_pieces_weight_minus_one() {
        let a = mixed_de_rham(1);
        // weight -1, degree 1: dx-multiples and delta-multiples
        for aux in 0..=4i64 {
            let piece = a.graded_piece(Trigrade::new(1, -1, aux)).unwrap();
            let expect = if aux == 0 { 1 } else { 2 };
            assert_eq!(piece.len(), expect, "aux {}", aux);
        }
    }

    #[test]
    fn finiteness_with_unbalanced_odd_generators() {
        // no functional is positive on both odd generators here; the even
        // generators alone certify finiteness
        let gens = vec![
            Generator::new("s", 0, -1, 0),
            Generator::new("eps", -1, -1, 0),
            Generator::new("eta", 1, 1, 0),
            Generator::new("u", 2, 1, 0),
        ];
        let a = AlgebraPresentation::new("res", AlgebraKind::Custom("res".into()), gens);
        let strings = |g: Trigrade| -> Vec<String> {
            a.graded_piece(g).unwrap().iter().map(|m| a.mono_string(m)).collect()
        };
        assert_eq!(strings(Trigrade::new(0, 0, 0)), vec!["1", "eps^1 eta^1"]);
        assert_eq!(strings(Trigrade::new(0, -1, 0)), vec!["s^1", "s^1 eps^1 eta^1"]);
        assert_eq!(strings(Trigrade::new(1, 1, 0)), vec!["eta^1"]);
        assert_eq!(strings(Trigrade::new(1, 0, 0)), vec!["eps^1 u^1", "s^1 eta^1"]);
    }

    #[test]
    fn additive_block_piece_is_infinite() {
        let a = bga_block();
        assert!(matches!(
            a.graded_piece(Trigrade::new(0, 0, 0)),
            Err(AlgebraError::InfinitePiece(..))
        ));
    }

    #[test]
    fn families_validate() {
        for a in [
            mixed_de_rham(1),
            mixed_de_rham(2),
            rees_weyl(1),
            rees_weyl(2),
            bgm_block(2),
            bgm_dual_block(2),
            bga_block(),
            bga_dual_block(),
        ] {
            a.validate().unwrap_or_else(|e| panic!("{}: {}", a.name, e));
        }
    }

    #[test]
    fn gr_of_filtered_operators_is_commutative() {
        let a = rees_weyl(2);
        let g = associated_graded(&a).unwrap();
        // the symbol-coordinate rule is now a plain swap
        let x1 = g.gen_index("x1").unwrap();
        let xi1 = g.gen_index("xi1").unwrap();
        let p = g.normal_form(&[(xi1, 1), (x1, 1)]);
        assert_eq!(p, poly_term(vec![(x1, 1), (xi1, 1)], q(1)));
        g.check_confluence().unwrap();
    }

    #[test]
    fn mixed_is_not_commutative_after_gr() {
        // gr only touches the filtration parameter; the mixed algebra keeps
        // its operator rule and must be reported as non-commutative
        let a = mixed_de_rham(1);
        assert!(matches!(associated_graded(&a), Err(AlgebraError::NotCommutative(_))));
    }

    #[test]
    fn d_squared_on_blocks() {
        let a = bgm_block(3);
        a.check_d_squared().unwrap();
        let b = bga_block();
        b.check_d_squared().unwrap();
        // Leibniz forces d(x delta) = x d(delta) = n x^2
        let delta = a.gen_index("delta").unwrap();
        let x = a.gen_index("x").unwrap();
        let p = a.d_poly(&poly_term(vec![(x, 1), (delta, 1)], q(1)));
        assert_eq!(p, poly_term(vec![(x, 2)], q(3)));
    }
}
