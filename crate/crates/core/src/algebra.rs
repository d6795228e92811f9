//! Finite-dimensional *-algebras of operators: generation, commutant and
//! center, block (Wedderburn) decomposition, distorted algebras,
//! compatibility of states, and support restriction of models.

use crate::channels::Superoperator;
use crate::config::Config;
use crate::error::{QhmError, Result};
use crate::linalg::{
    cplx, creal, hermitian_eigen, null_space_below, partial_trace_first, partial_trace_second,
    polar_unitary, projector_basis, support_basis, CMatrix, CVector, DistortionMap, Operator,
};
use crate::model::{block_offsets, QhmModel};
use crate::scalar::Real;
use crate::subspace::{krylov, orthogonalize, OperatorSubspace};
use nalgebra::ComplexField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Maximum number of redraws of the randomized block decomposition.
pub const WEDDERBURN_ATTEMPTS: u64 = 8;

/// A *-subalgebra of `B(C^n)`.
#[derive(Clone, Debug)]
pub struct MatrixAlgebra<T: Real> {
    basis: OperatorSubspace<T>,
    unital: bool,
    decomposition: Option<BlockDecomposition<T>>,
}

/// Unitary `U` with `U^† A U = ⊕_l (B(C^{d_S,l}) ⊗ I_{d_F,l}) ⊕ 0_R`.
///
/// Within block `l` the column for the pair `(s, f)` sits at offset
/// `s * d_F + f`; residual columns come last.
#[derive(Clone, Debug)]
pub struct BlockDecomposition<T: Real> {
    pub unitary: CMatrix<T>,
    /// `(d_S, d_F)` per block.
    pub blocks: Vec<(usize, usize)>,
    pub residual_dim: usize,
}

impl<T: Real> BlockDecomposition<T> {
    pub fn dim(&self) -> usize {
        self.unitary.nrows()
    }

    /// Column offset of each block in `U`.
    pub fn offsets(&self) -> Vec<usize> {
        let sizes: Vec<usize> = self.blocks.iter().map(|(s, f)| s * f).collect();
        block_offsets(&sizes)
    }

    /// Columns of `U` spanning block `l` (`n x d_S d_F`).
    pub fn block_columns(&self, l: usize) -> CMatrix<T> {
        let (s, f) = self.blocks[l];
        self.unitary.columns(self.offsets()[l], s * f).into_owned()
    }

    /// The isometry `V_l` (`d_S d_F x n`).
    pub fn isometry(&self, l: usize) -> CMatrix<T> {
        self.block_columns(l).adjoint()
    }

    pub fn central_projector(&self, l: usize) -> Operator<T> {
        let c = self.block_columns(l);
        Operator::from(&c * c.adjoint())
    }

    /// `Σ_l d_S,l`, the side of the reduced matrix space.
    pub fn reduced_side(&self) -> usize {
        self.blocks.iter().map(|b| b.0).sum()
    }

    /// `Σ_l d_S,l^2`, the dimension of the algebra.
    pub fn algebra_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.0 * b.0).sum()
    }

    /// `U (E_ij^{(l)} ⊗ I_F) U^†` for all blocks and matrix units.
    pub fn reconstruct_basis(&self) -> Vec<Operator<T>> {
        let mut out = Vec::with_capacity(self.algebra_dim());
        for l in 0..self.blocks.len() {
            let (ds, df) = self.blocks[l];
            let c = self.block_columns(l);
            for i in 0..ds {
                for j in 0..ds {
                    let mut m = CMatrix::zeros(ds * df, ds * df);
                    for f in 0..df {
                        m[(i * df + f, j * df + f)] = creal(T::one());
                    }
                    out.push(Operator::from(&c * m * c.adjoint()));
                }
            }
        }
        out
    }

    /// Largest deviation of `U^† b U` from `⊕ (A_l ⊗ I) ⊕ 0` over the basis.
    pub fn structure_residual(&self, alg: &MatrixAlgebra<T>) -> T {
        let u = &self.unitary;
        let offs = self.offsets();
        let mut worst = T::zero();
        for b in alg.basis().basis() {
            let x = u.adjoint() * b.matrix() * u;
            let mut expected = CMatrix::zeros(x.nrows(), x.ncols());
            for (l, &(ds, df)) in self.blocks.iter().enumerate() {
                let m = ds * df;
                let blk = x.view((offs[l], offs[l]), (m, m)).into_owned();
                let a = partial_trace_second(&blk, ds, df).unscale(T::usize_lit(df));
                expected
                    .view_mut((offs[l], offs[l]), (m, m))
                    .copy_from(&a.kronecker(&CMatrix::identity(df, df)));
            }
            worst = worst.max((x - expected).norm() / b.norm().max(T::default_epsilon()));
        }
        worst
    }

    /// Round-trip residual: the span of [`Self::reconstruct_basis`] against
    /// the algebra, in both directions.
    pub fn roundtrip_residual(&self, alg: &MatrixAlgebra<T>, tol: T) -> Result<T> {
        let n = self.dim();
        let rebuilt = OperatorSubspace::span(n, &self.reconstruct_basis(), tol)?;
        if rebuilt.rank() != alg.dim() {
            return Ok(T::one());
        }
        Ok(rebuilt
            .containment_residual(alg.basis())
            .max(alg.basis().containment_residual(&rebuilt)))
    }
}

/// Result of a compatibility test between a state and an algebra.
#[derive(Clone, Copy, Debug)]
pub struct CompatibilityReport {
    pub compatible: bool,
    /// Modular-invariance residual.
    pub residual: f64,
    /// Residual of the block-structure test (`rho_l = rho_S ⊗ tau_F`), when a
    /// decomposition is available.
    pub block_residual: Option<f64>,
}

/// `D_sigma(base)` together with its undistorted base algebra.
#[derive(Clone, Debug)]
pub struct DistortedAlgebra<T: Real> {
    pub base: MatrixAlgebra<T>,
    pub sigma: DistortionMap<T>,
    pub basis: OperatorSubspace<T>,
}

impl<T: Real> DistortedAlgebra<T> {
    pub fn dim(&self) -> usize {
        self.basis.rank()
    }

    /// Largest residual of `b_i^†` and `b_i sigma^{-1} b_j` against the span.
    pub fn closure_residual(&self) -> Result<T> {
        let ops = self.basis.basis();
        closure_residual_with(&self.basis, &ops, |x, y| self.sigma.weighted_product(x, y))
    }
}

fn closure_residual_with<T: Real>(
    span: &OperatorSubspace<T>,
    ops: &[Operator<T>],
    product: impl Fn(&Operator<T>, &Operator<T>) -> Operator<T>,
) -> Result<T> {
    let mut worst = T::zero();
    for x in ops {
        let scale = x.norm().max(T::default_epsilon());
        worst = worst.max(span.residual(&x.dagger())? / scale);
        for y in ops {
            let p = product(x, y);
            let scale = (x.norm() * y.norm()).max(T::default_epsilon());
            worst = worst.max(span.residual(&p)? / scale);
        }
    }
    Ok(worst)
}

/// Closure of `gens` under adjoints and an associative product: the span of
/// all words in `gens ∪ gens^†`, built by left-multiplying new directions by
/// the (unit-normalized) generators until no new direction appears.
fn close_under<T: Real>(
    n: usize,
    gens: &[Operator<T>],
    product: impl Fn(&Operator<T>, &Operator<T>) -> Operator<T>,
    tol: T,
) -> OperatorSubspace<T> {
    let mut letters: Vec<Operator<T>> = Vec::with_capacity(2 * gens.len());
    for g in gens {
        let nrm = g.norm();
        if nrm > T::zero() {
            let g = g.scale(T::one() / nrm);
            letters.push(g.dagger());
            letters.push(g);
        }
    }
    let mut cols: Vec<CVector<T>> = Vec::new();
    let mut frontier: Vec<Operator<T>> = Vec::new();
    for g in &letters {
        if let Some(dir) = orthogonalize(&cols, g.vec(), tol) {
            frontier.push(Operator::from_vec(dir.as_slice(), n));
            cols.push(dir);
        }
    }
    while !frontier.is_empty() && cols.len() < n * n {
        let mut next = Vec::new();
        for w in &frontier {
            for g in &letters {
                let p = product(g, w);
                if let Some(dir) = orthogonalize(&cols, p.vec(), tol) {
                    next.push(Operator::from_vec(dir.as_slice(), n));
                    cols.push(dir);
                }
            }
        }
        frontier = next;
    }
    let mut q = CMatrix::zeros(n * n, cols.len());
    for (k, c) in cols.iter().enumerate() {
        q.set_column(k, c);
    }
    OperatorSubspace::from_orthonormal_columns(n, q)
}

/// Smallest *-algebra containing `gens`.
pub fn generated_algebra<T: Real>(gens: &OperatorSubspace<T>, tol: T) -> Result<MatrixAlgebra<T>> {
    if gens.is_zero() {
        return Err(QhmError::Empty("generators of an algebra"));
    }
    let n = gens.ambient_dim();
    let basis = close_under(n, &gens.basis(), |x, y| Operator::from(x.matrix() * y.matrix()), tol);
    Ok(MatrixAlgebra::from_closed_basis(basis, tol))
}

/// `D_sigma(alg(D_sigma^{-1}(gens)))`.
pub fn distorted_generated_algebra<T: Real>(
    sigma: &DistortionMap<T>,
    gens: &OperatorSubspace<T>,
    tol: T,
) -> Result<DistortedAlgebra<T>> {
    let n = gens.ambient_dim();
    let undistorted: Vec<Operator<T>> = gens
        .basis()
        .iter()
        .map(|g| sigma.undistort(g))
        .collect::<Result<_>>()?;
    let base = generated_algebra(&OperatorSubspace::span(n, &undistorted, tol)?, tol)?;
    let distorted: Vec<Operator<T>> = base.basis().basis().iter().map(|b| sigma.distort(b)).collect();
    let basis = OperatorSubspace::span(n, &distorted, tol)?;
    Ok(DistortedAlgebra {
        base,
        sigma: sigma.clone(),
        basis,
    })
}

/// Direct closure of `gens` under adjoints and `X sigma^{-1} Y`, without
/// passing through the undistorted algebra.
pub fn distorted_closure<T: Real>(
    sigma: &DistortionMap<T>,
    gens: &OperatorSubspace<T>,
    tol: T,
) -> Result<OperatorSubspace<T>> {
    for g in gens.basis() {
        sigma.undistort(&g)?;
    }
    Ok(close_under(
        gens.ambient_dim(),
        &gens.basis(),
        |x, y| sigma.weighted_product(x, y),
        tol,
    ))
}

impl<T: Real> MatrixAlgebra<T> {
    fn from_closed_basis(basis: OperatorSubspace<T>, tol: T) -> Self {
        let n = basis.ambient_dim();
        let unital = basis.contains(&Operator::identity(n), tol).unwrap_or(false);
        Self {
            basis,
            unital,
            decomposition: None,
        }
    }

    /// Wraps a basis after checking closure under adjoint and product.
    pub fn from_basis(basis: OperatorSubspace<T>, tol: T) -> Result<Self> {
        let ops = basis.basis();
        let res = closure_residual_with(&basis, &ops, |x, y| Operator::from(x.matrix() * y.matrix()))?;
        if res > tol {
            return Err(QhmError::NotClosed(res.as_f64()));
        }
        Ok(Self::from_closed_basis(basis, tol))
    }

    /// The full algebra `B(C^n)`.
    pub fn full(n: usize) -> Self {
        Self {
            basis: OperatorSubspace::full(n),
            unital: true,
            decomposition: None,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.ambient_dim()
    }

    pub fn dim(&self) -> usize {
        self.basis.rank()
    }

    pub fn basis(&self) -> &OperatorSubspace<T> {
        &self.basis
    }

    /// Whether the algebra contains the identity of the ambient space.
    pub fn is_unital(&self) -> bool {
        self.unital
    }

    pub fn decomposition(&self) -> Option<&BlockDecomposition<T>> {
        self.decomposition.as_ref()
    }

    pub fn contains(&self, x: &Operator<T>, tol: T) -> Result<bool> {
        self.basis.contains(x, tol)
    }

    pub fn closure_residual(&self) -> Result<T> {
        if self.dim() == self.ambient_dim().pow(2) {
            return Ok(T::zero());
        }
        let ops = self.basis.basis();
        closure_residual_with(&self.basis, &ops, |x, y| Operator::from(x.matrix() * y.matrix()))
    }

    /// Isometry (`n x k`) onto the support, the sum of the supports of the
    /// basis elements.
    pub fn support_basis(&self, tol: T) -> Result<CMatrix<T>> {
        support_basis(&self.basis.basis(), tol)
    }

    pub fn support_projector(&self, tol: T) -> Result<Operator<T>> {
        let v = self.support_basis(tol)?;
        Ok(Operator::from(&v * v.adjoint()))
    }

    /// `{X : [X, b] = 0 for all b}`, as the null space of the stacked
    /// commutator maps.
    pub fn commutant(&self, tol: T) -> MatrixAlgebra<T> {
        let n = self.ambient_dim();
        let nn = n * n;
        let id = CMatrix::<T>::identity(n, n);
        let mut null = CMatrix::<T>::identity(nn, nn);
        for b in self.basis.basis() {
            if null.ncols() == 0 {
                break;
            }
            // vec(X b - b X) = (b^T ⊗ I - I ⊗ b) vec(X)
            let l = b.matrix().transpose().kronecker(&id) - id.kronecker(b.matrix());
            let m = l * &null;
            let k = null_space_below(&m, tol * T::lit(2.0) * b.norm().max(T::one()));
            null = &null * k;
        }
        let q = crate::linalg::orthonormal_range(&null, tol);
        Self::from_closed_basis(OperatorSubspace::from_orthonormal_columns(n, q), tol)
    }

    /// `Z(A) = A ∩ A'`.
    pub fn center(&self, tol: T) -> Result<MatrixAlgebra<T>> {
        let c = self.commutant(tol);
        let z = self.basis.intersect(c.basis(), tol)?;
        Ok(Self::from_closed_basis(z, tol))
    }

    /// Runs the block decomposition and stores it.
    pub fn decomposed(mut self, cfg: &Config<T>) -> Result<Self> {
        let d = wedderburn(&self, cfg)?;
        self.decomposition = Some(d);
        Ok(self)
    }
}

fn hermitian_parts<T: Real>(ops: &[Operator<T>]) -> Vec<CMatrix<T>> {
    let mut out = Vec::with_capacity(2 * ops.len());
    for op in ops {
        out.push(op.hermitian_part().into_matrix());
        out.push(op.anti_hermitian_part().into_matrix());
    }
    out
}

fn random_combination<T: Real>(parts: &[CMatrix<T>], dim: usize, rng: &mut ChaCha8Rng) -> CMatrix<T> {
    let mut h = CMatrix::zeros(dim, dim);
    for p in parts {
        let c: f64 = rng.sample(StandardNormal);
        h += p.scale(T::lit(c));
    }
    h
}

/// Groups ascending eigenvalues into clusters separated by gaps larger than
/// `gap` times the spectral scale.
fn clusters<T: Real>(ev: &[T], gap: T) -> Vec<std::ops::Range<usize>> {
    if ev.is_empty() {
        return Vec::new();
    }
    let spread = ev[ev.len() - 1] - ev[0];
    let range = spread.max(ev[0].abs()).max(ev[ev.len() - 1].abs());
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..ev.len() {
        if ev[i] - ev[i - 1] > gap * range {
            out.push(start..i);
            start = i;
        }
    }
    out.push(start..ev.len());
    out
}

/// Orthonormal basis of a block algebra `{B^† b B}` compressed to `k` dims.
fn compress_all<T: Real>(ops: &[Operator<T>], v: &CMatrix<T>, tol: T) -> Result<OperatorSubspace<T>> {
    let k = v.ncols();
    let comp: Vec<Operator<T>> = ops
        .iter()
        .map(|b| Operator::from(v.adjoint() * b.matrix() * v))
        .collect();
    OperatorSubspace::span(k, &comp, tol)
}

struct Block<T: Real> {
    ds: usize,
    df: usize,
    /// Columns in the ambient space, ordered `(s, f) -> s * df + f`.
    cols: CMatrix<T>,
    key: usize,
}

/// Randomized spectral block decomposition; redraws on failure of the
/// structure check.
pub fn wedderburn<T: Real>(alg: &MatrixAlgebra<T>, cfg: &Config<T>) -> Result<BlockDecomposition<T>> {
    let closure = alg.closure_residual()?;
    if closure > cfg.guard_tol() {
        return Err(QhmError::NotClosed(closure.as_f64()));
    }
    let mut last = f64::INFINITY;
    for attempt in 0..WEDDERBURN_ATTEMPTS {
        let seed = cfg.seed.wrapping_add(attempt);
        match wedderburn_attempt(alg, cfg, seed) {
            Ok(d) => {
                let res = d.structure_residual(alg);
                if res <= cfg.guard_tol() {
                    return Ok(d);
                }
                last = res.as_f64();
            }
            Err(QhmError::Wedderburn { residual, .. }) => last = residual,
            Err(e) => return Err(e),
        }
    }
    Err(QhmError::Wedderburn {
        attempts: WEDDERBURN_ATTEMPTS as usize,
        residual: last,
    })
}

fn wedderburn_attempt<T: Real>(
    alg: &MatrixAlgebra<T>,
    cfg: &Config<T>,
    seed: u64,
) -> Result<BlockDecomposition<T>> {
    let tol = cfg.tol;
    let fail = |residual: f64| QhmError::Wedderburn { attempts: 1, residual };
    let n = alg.ambient_dim();
    if alg.dim() == 0 {
        return Err(QhmError::Empty("algebra"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops = alg.basis().basis();
    let supp = alg.support_basis(tol)?;
    let k = supp.ncols();
    // Work in the support, where the algebra is unital.
    let compressed = compress_all(&ops, &supp, tol)?;
    let comp_alg = MatrixAlgebra::from_closed_basis(compressed, tol);
    let center = comp_alg.center(tol)?;
    let h = random_combination(&hermitian_parts(&center.basis().basis()), k, &mut rng);
    let (ev, vecs) = hermitian_eigen(&h);
    let groups = clusters(&ev, cfg.gap_tol());
    if groups.len() != center.dim() {
        return Err(fail(groups.len() as f64));
    }
    let comp_ops = comp_alg.basis().basis();
    let mut blocks: Vec<Block<T>> = Vec::with_capacity(groups.len());
    for g in groups {
        let e = vecs.columns(g.start, g.len()).into_owned();
        let proj = &e * e.adjoint();
        let m = g.len();
        let bb = projector_basis(&proj, m);
        if bb.ncols() != m {
            return Err(fail(m as f64));
        }
        let local = compress_all(&comp_ops, &bb, tol)?;
        let ds = (local.rank() as f64).sqrt().round() as usize;
        if ds == 0 || ds * ds != local.rank() || m % ds != 0 {
            return Err(fail(local.rank() as f64));
        }
        let df = m / ds;
        let local_cols = if df == 1 {
            bb
        } else {
            let local_alg = MatrixAlgebra::from_closed_basis(local, tol);
            &bb * multiplicity_frame(&local_alg, ds, df, cfg, &mut rng)?
        };
        let cols = &supp * local_cols;
        let full_proj = &cols * cols.adjoint();
        let key = (0..n)
            .find(|&i| full_proj[(i, i)].re > cfg.gap_tol())
            .unwrap_or(n);
        blocks.push(Block { ds, df, cols, key });
    }
    blocks.sort_by(|a, b| {
        (b.ds, b.df)
            .cmp(&(a.ds, a.df))
            .then(a.key.cmp(&b.key))
    });
    let mut unitary = CMatrix::zeros(n, n);
    let mut off = 0;
    for b in &blocks {
        unitary.columns_mut(off, b.cols.ncols()).copy_from(&b.cols);
        off += b.cols.ncols();
    }
    let residual_dim = n - k;
    if residual_dim > 0 {
        let p = &supp * supp.adjoint();
        let q = CMatrix::identity(n, n) - p;
        let rest = projector_basis(&q, residual_dim);
        if rest.ncols() != residual_dim {
            return Err(fail(residual_dim as f64));
        }
        unitary.columns_mut(off, residual_dim).copy_from(&rest);
    }
    let unit_res = (unitary.adjoint() * &unitary - CMatrix::identity(n, n)).norm();
    if unit_res > cfg.guard_tol() {
        return Err(fail(unit_res.as_f64()));
    }
    Ok(BlockDecomposition {
        unitary,
        blocks: blocks.iter().map(|b| (b.ds, b.df)).collect(),
        residual_dim,
    })
}

/// For a factor `B(C^ds) ⊗ I_df` given in some basis of `C^{ds df}`, returns
/// a unitary whose columns realize the `(s, f) -> s * df + f` tensor order.
fn multiplicity_frame<T: Real>(
    local: &MatrixAlgebra<T>,
    ds: usize,
    df: usize,
    cfg: &Config<T>,
    rng: &mut ChaCha8Rng,
) -> Result<CMatrix<T>> {
    let m = ds * df;
    let fail = |residual: f64| QhmError::Wedderburn { attempts: 1, residual };
    let comm = local.commutant(cfg.tol);
    if comm.dim() != df * df {
        return Err(fail(comm.dim() as f64));
    }
    let comm_ops = comm.basis().basis();
    let h = random_combination(&hermitian_parts(&comm_ops), m, rng);
    let (ev, vecs) = hermitian_eigen(&h);
    let groups = clusters(&ev, cfg.gap_tol());
    if groups.len() != df || groups.iter().any(|g| g.len() != ds) {
        return Err(fail(groups.len() as f64));
    }
    let spaces: Vec<CMatrix<T>> = groups
        .iter()
        .map(|g| vecs.columns(g.start, ds).into_owned())
        .collect();
    // Fixed basis of the first copy, then transported by commutant elements.
    let first = &spaces[0];
    let first_basis = projector_basis(&(first * first.adjoint()), ds);
    let mut copies = vec![first_basis.clone()];
    for e in spaces.iter().skip(1) {
        let best = comm_ops
            .iter()
            .map(|x| {
                let mm = e.adjoint() * x.matrix() * first;
                let nrm = mm.norm();
                (mm, nrm)
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
            .ok_or_else(|| fail(0.0))?;
        if best.1 <= cfg.gap_tol() {
            return Err(fail(best.1.as_f64()));
        }
        let w = polar_unitary(&best.0);
        // coordinates of the fixed basis inside `first`
        let coords = first.adjoint() * &first_basis;
        copies.push(e * w * coords);
    }
    let mut out = CMatrix::zeros(m, m);
    for s in 0..ds {
        for (f, c) in copies.iter().enumerate() {
            out.set_column(s * df + f, &c.column(s));
        }
    }
    Ok(out)
}

/// Modular-invariance compatibility test of `rho` with `alg`, with the block
/// test as a cross-check when `alg` carries a decomposition.
pub fn is_compatible<T: Real>(
    rho: &Operator<T>,
    alg: &MatrixAlgebra<T>,
    tol: T,
) -> Result<CompatibilityReport> {
    let herm = rho.hermitian_residual();
    if herm > tol {
        return Err(QhmError::NotHermitian(herm.as_f64()));
    }
    let d = DistortionMap::new(rho.clone(), tol)?;
    let supp = alg.support_projector(tol)?;
    let p = d.support_projector();
    let leak = (supp.matrix() - p.matrix() * supp.matrix()).norm();
    if leak > tol.sqrt() {
        return Err(QhmError::SupportViolation(leak.as_f64()));
    }
    let n = alg.ambient_dim();
    let distorted: Vec<Operator<T>> = alg.basis().basis().iter().map(|b| d.distort(b)).collect();
    let span = OperatorSubspace::span(n, &distorted, tol)?;
    let mut residual = T::zero();
    for b in span.basis() {
        let m = d.modular(&b);
        let nrm = m.norm();
        if nrm > T::zero() {
            residual = residual.max(span.residual(&m)? / nrm);
        }
    }
    let block_residual = alg.decomposition().map(|dec| block_compatibility(rho, dec).as_f64());
    Ok(CompatibilityReport {
        compatible: residual <= tol,
        residual: residual.as_f64(),
        block_residual,
    })
}

/// `rho` compressed to each block should factor as `rho_S ⊗ tau_F`, with no
/// weight between different blocks.
fn block_compatibility<T: Real>(rho: &Operator<T>, dec: &BlockDecomposition<T>) -> T {
    let u = &dec.unitary;
    let x = u.adjoint() * rho.matrix() * u;
    let offs = dec.offsets();
    let scale = rho.norm().max(T::default_epsilon());
    let mut worst = T::zero();
    let covered: usize = dec.blocks.iter().map(|(s, f)| s * f).sum();
    let mut diag_part = CMatrix::zeros(covered, covered);
    for (l, &(ds, df)) in dec.blocks.iter().enumerate() {
        let m = ds * df;
        let blk = x.view((offs[l], offs[l]), (m, m)).into_owned();
        let tr = blk.trace();
        if tr.modulus() > T::default_epsilon() {
            let rs = partial_trace_second(&blk, ds, df);
            let tf = partial_trace_first(&blk, ds, df);
            let fact = rs.kronecker(&tf) / tr;
            worst = worst.max((&blk - fact).norm() / scale);
        }
        diag_part.view_mut((offs[l], offs[l]), (m, m)).copy_from(&blk);
    }
    let cov = x.view((0, 0), (covered, covered)).into_owned();
    worst.max((cov - diag_part).norm() / scale)
}

/// `Π_Z[V]` for the first positive-definite candidate `V`: the hint, then the
/// Hermitian parts (with either sign) of the generators, then their average.
/// The result is normalized to unit trace.
pub fn minimal_distortion_state<T: Real>(
    gens: &OperatorSubspace<T>,
    hint: Option<&Operator<T>>,
    tol: T,
) -> Result<Operator<T>> {
    let alg = generated_algebra(gens, tol)?;
    let z = alg.center(tol)?;
    let mut candidates: Vec<Operator<T>> = hint.into_iter().cloned().collect();
    let herm: Vec<Operator<T>> = gens.basis().iter().map(|g| g.hermitian_part()).collect();
    for h in &herm {
        candidates.push(h.clone());
        candidates.push(h.scale(-T::one()));
    }
    if !herm.is_empty() {
        let sum = herm
            .iter()
            .fold(CMatrix::zeros(gens.ambient_dim(), gens.ambient_dim()), |a, h| a + h.matrix());
        candidates.push(Operator::from(sum));
    }
    for v in candidates {
        let s = z.basis().project(&v)?.hermitian_part();
        if s.is_positive_definite(tol) {
            let tr = s.trace().re;
            return Ok(s.scale(T::one() / tr));
        }
    }
    Err(QhmError::NoPositiveDefinite)
}

/// A model compressed onto the range of a projector, with the CPTP pair
/// realizing the compression.
#[derive(Clone, Debug)]
pub struct Restriction<T: Real> {
    pub model: QhmModel<T>,
    /// `R(X) = V^† X V + tr((I - P) X) I / r`.
    pub reduce: Superoperator<T>,
    /// `J(Y) = V Y V^†`.
    pub inject: Superoperator<T>,
    pub isometry: CMatrix<T>,
}

/// Restricts `m` to the range of `p`, which must commute with the block mask
/// of `m` and leave the reachable dynamics inside its range.
pub fn restrict_to_support<T: Real>(
    m: &QhmModel<T>,
    p: &Operator<T>,
    cfg: &Config<T>,
) -> Result<Restriction<T>> {
    let n = m.dim();
    let tol = cfg.tol;
    if p.dim() != n {
        return Err(QhmError::DimensionMismatch {
            expected: n,
            got: p.dim(),
        });
    }
    let pm = p.matrix();
    // Isometry chosen block by block so the block mask carries over.
    let offs = block_offsets(m.blocks());
    let mut cols: Vec<CVector<T>> = Vec::new();
    let mut new_blocks = Vec::new();
    for (&o, &b) in offs.iter().zip(m.blocks()) {
        let pb = pm.view((o, o), (b, b)).into_owned();
        let rank = pb.trace().re.round().as_f64() as usize;
        if rank == 0 {
            continue;
        }
        let basis = projector_basis(&pb, rank);
        for c in basis.column_iter() {
            let mut v = CVector::zeros(n);
            v.rows_mut(o, b).copy_from(&c);
            cols.push(v);
        }
        new_blocks.push(rank);
    }
    let r = cols.len();
    if r == 0 {
        return Err(QhmError::InvalidParameter("restriction to a zero projector".into()));
    }
    let mut v = CMatrix::zeros(n, r);
    for (k, c) in cols.iter().enumerate() {
        v.set_column(k, c);
    }
    let proj_res = (&v * v.adjoint() - pm).norm();
    if proj_res > cfg.guard_tol() {
        return Err(QhmError::Residual {
            stage: "support restriction (projector not block-diagonal)",
            residual: proj_res.as_f64(),
        });
    }
    // Invariance of the reachable dynamics under the projector.
    let reach = krylov(n, m.initial_states(), m.map(), tol)?;
    let vv = &v * v.adjoint();
    let mut inv = T::zero();
    for b in reach.basis() {
        let compressed = Operator::from(&vv * b.matrix() * &vv);
        inv = inv.max((b.matrix() - compressed.matrix()).norm());
        let img = m.map().apply(&compressed)?;
        inv = inv.max((img.matrix() - &vv * img.matrix() * &vv).norm());
    }
    if inv > cfg.guard_tol() {
        return Err(QhmError::NotInvariant(inv.as_f64()));
    }
    let mut rk = vec![v.adjoint()];
    if r < n {
        let comp = projector_basis(&(CMatrix::identity(n, n) - &vv), n - r);
        let w = T::one() / T::usize_lit(r).sqrt();
        for qc in comp.column_iter() {
            for a in 0..r {
                let mut e = CVector::zeros(r);
                e[a] = cplx(w, T::zero());
                rk.push(&e * qc.adjoint());
            }
        }
    }
    let reduce = Superoperator::from_kraus(rk)?;
    let inject = Superoperator::from_kraus(vec![v.clone()])?;
    let map = Superoperator::compose(&reduce, &Superoperator::compose(m.map(), &inject)?)?;
    let inj_adj = inject.adjoint();
    let outputs = m
        .output_ops()
        .iter()
        .map(|c| inj_adj.apply(c))
        .collect::<Result<Vec<_>>>()?;
    let states = m
        .initial_states()
        .iter()
        .map(|s| reduce.apply(s))
        .collect::<Result<Vec<_>>>()?;
    let model = QhmModel::from_parts(map, outputs, states, new_blocks, m.label.clone())?
        .with_metadata(m.metadata.clone());
    Ok(Restriction {
        model,
        reduce,
        inject,
        isometry: v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{
        distorted_algebra_example, grover, pauli, random_density, random_hermitian, random_unitary,
    };
    use crate::subspace::reachable_subspace;
    use proptest::prelude::*;

    const TOL: f64 = 1e-9;

    fn cfg() -> Config<f64> {
        Config::default()
    }

    fn span(n: usize, ops: &[Operator<f64>]) -> OperatorSubspace<f64> {
        OperatorSubspace::span(n, ops, TOL).unwrap()
    }

    fn diag(d: &[f64]) -> Operator<f64> {
        Operator::from_real_diagonal(d)
    }

    /// `W (⊕_l B(C^{ds}) ⊗ I_{df} ⊕ 0) W^†` with a random unitary `W`.
    fn planted(blocks: &[(usize, usize)], residual: usize, seed: u64) -> (MatrixAlgebra<f64>, CMatrix<f64>) {
        let n: usize = blocks.iter().map(|(s, f)| s * f).sum::<usize>() + residual;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_unitary::<f64, _>(n, &mut rng);
        let mut ops = Vec::new();
        let mut off = 0;
        for &(ds, df) in blocks {
            for i in 0..ds {
                for j in 0..ds {
                    let mut e = CMatrix::<f64>::zeros(ds, ds);
                    e[(i, j)] = creal(1.0);
                    let blk = e.kronecker(&CMatrix::identity(df, df));
                    let mut full = CMatrix::zeros(n, n);
                    full.view_mut((off, off), (ds * df, ds * df)).copy_from(&blk);
                    ops.push(Operator::from(&w * full * w.adjoint()));
                }
            }
            off += ds * df;
        }
        let alg = MatrixAlgebra::from_basis(span(n, &ops), 1e-8).unwrap();
        (alg, w)
    }

    #[test]
    fn identity_generates_rank_one() {
        let a = generated_algebra(&span(3, &[Operator::identity(3)]), TOL).unwrap();
        assert_eq!(a.dim(), 1);
        assert!(a.is_unital());
        assert!(generated_algebra(&OperatorSubspace::<f64>::zero(2), TOL).is_err());
    }

    #[test]
    fn distorted_example_dimensions() {
        let (gens, rho) = distorted_algebra_example::<f64>();
        let g = span(4, &gens);
        let a = generated_algebra(&g, TOL).unwrap();
        assert_eq!(a.dim(), 8);
        assert!(a.closure_residual().unwrap() < 1e-9);
        let d = DistortionMap::new(rho.clone(), TOL).unwrap();
        let da = distorted_generated_algebra(&d, &g, TOL).unwrap();
        assert_eq!(da.base.dim(), 4);
        let expected: Vec<Operator<f64>> = (0..4)
            .map(|k| Operator::from(pauli::<f64>(0).kronecker(&pauli::<f64>(k))))
            .collect();
        assert!(da.base.basis().same_as(&span(4, &expected), 1e-9));
        // center of alg(V) is span{σ_j ⊗ I, j = 0, z}
        let z = a.center(TOL).unwrap();
        let zexp: Vec<Operator<f64>> = [0, 3]
            .iter()
            .map(|&k| Operator::from(pauli::<f64>(k).kronecker(&pauli::<f64>(0))))
            .collect();
        assert!(z.basis().same_as(&span(4, &zexp), 1e-9));
        let rep = is_compatible(&rho, &a, TOL).unwrap();
        assert!(rep.compatible, "residual {}", rep.residual);
    }

    #[test]
    fn grover_reachable_algebra() {
        let m = grover::<f64>(8, 1).unwrap();
        let r = reachable_subspace(&m, TOL).unwrap();
        let a = generated_algebra(&r, TOL).unwrap();
        assert_eq!(a.dim(), 4);
        let p = a.support_projector(TOL).unwrap();
        assert!((p.trace().re - 2.0).abs() < 1e-9);
        // oracle: the support is span{|alpha>, |beta>}
        let mut alpha = CVector::<f64>::from_element(8, creal(1.0 / 7f64.sqrt()));
        alpha[0] = creal(0.0);
        let mut beta = CVector::<f64>::zeros(8);
        beta[0] = creal(1.0);
        let expected = &alpha * alpha.adjoint() + &beta * beta.adjoint();
        assert!((p.matrix() - expected).norm() < 1e-9);
    }

    #[test]
    fn commutant_and_center_of_full_algebra() {
        let a = MatrixAlgebra::<f64>::full(3);
        let c = a.commutant(TOL);
        assert_eq!(c.dim(), 1);
        assert!(c.contains(&Operator::identity(3), 1e-9).unwrap());
        assert_eq!(a.center(TOL).unwrap().dim(), 1);
    }

    #[test]
    fn commutant_of_planted_blocks() {
        let blocks = [(2, 2), (1, 3), (1, 1)];
        let (a, _) = planted(&blocks, 1, 5);
        let expected: usize = blocks.iter().map(|b| b.1 * b.1).sum();
        // the zero block on the residual space adds one more commuting unit
        assert_eq!(a.commutant(TOL).dim(), expected + 1);
    }

    #[test]
    fn wedderburn_examples() {
        let a = generated_algebra(&span(2, &[Operator::identity(2)]), TOL).unwrap();
        let d = wedderburn(&a, &cfg()).unwrap();
        assert_eq!(d.blocks, vec![(1, 2)]);
        assert_eq!(d.residual_dim, 0);

        let app: Vec<Operator<f64>> = vec![diag(&[1.0, 0., 0., 0.]), diag(&[0., 1.0, 0., 0.]), diag(&[0., 0., 1.0, 1.0])];
        let a = MatrixAlgebra::from_basis(span(4, &app), TOL).unwrap();
        let d = wedderburn(&a, &cfg()).unwrap();
        assert_eq!(d.blocks, vec![(1, 2), (1, 1), (1, 1)]);
        assert!(d.roundtrip_residual(&a, TOL).unwrap() < 1e-9);

        let full = MatrixAlgebra::<f64>::full(3);
        let d = wedderburn(&full, &cfg()).unwrap();
        assert_eq!(d.blocks, vec![(3, 1)]);
        assert!((&d.unitary - CMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn wedderburn_on_planted_structure() {
        for seed in 0..6 {
            let blocks = [(2, 2), (2, 1), (1, 2)];
            let (a, _) = planted(&blocks, 2, seed);
            let d = wedderburn(&a, &cfg()).unwrap();
            assert_eq!(d.blocks, blocks.to_vec());
            assert_eq!(d.residual_dim, 2);
            assert!(d.structure_residual(&a) < 1e-9);
            assert!(d.roundtrip_residual(&a, TOL).unwrap() < 1e-9);
        }
    }

    #[test]
    fn wedderburn_is_deterministic() {
        let (a, _) = planted(&[(2, 3)], 0, 17);
        let d1 = wedderburn(&a, &cfg()).unwrap();
        let d2 = wedderburn(&a, &cfg()).unwrap();
        assert_eq!(d1.unitary, d2.unitary);
    }

    #[test]
    fn compatibility_examples() {
        let (a, w) = planted(&[(1, 2), (2, 1)], 0, 3);
        let a = a.decomposed(&cfg()).unwrap();
        let mixed = Operator::identity(4).scale(0.25);
        let rep = is_compatible(&mixed, &a, TOL).unwrap();
        assert!(rep.compatible && rep.block_residual.unwrap() < 1e-9);
        // coherence between the two blocks
        let mut bad = CMatrix::<f64>::from_diagonal(&CVector::from_vec(vec![creal(0.1), creal(0.2), creal(0.3), creal(0.4)]));
        bad[(0, 2)] = creal(0.05);
        bad[(2, 0)] = creal(0.05);
        let rho = Operator::from(&w * bad * w.adjoint());
        let rep = is_compatible(&rho, &a, TOL).unwrap();
        assert!(!rep.compatible);
        assert!(rep.block_residual.unwrap() > 1e-3);
    }

    #[test]
    fn incompatible_diagonal_state_on_multiplicity_factor() {
        // A = B(C^2) on {|2>, |3>} plus C I_2 on {|0>, |1>}
        let ops = vec![
            diag(&[1.0, 1.0, 0.0, 0.0]),
            Operator::from_rows(4, &[
                (0., 0.), (0., 0.), (0., 0.), (0., 0.),
                (0., 0.), (0., 0.), (0., 0.), (0., 0.),
                (0., 0.), (0., 0.), (0., 0.), (1., 0.),
                (0., 0.), (0., 0.), (0., 0.), (0., 0.),
            ]),
        ];
        let a = generated_algebra(&span(4, &ops), TOL).unwrap().decomposed(&cfg()).unwrap();
        assert_eq!(a.decomposition().unwrap().blocks, vec![(2, 1), (1, 2)]);
        let rho = diag(&[0.1, 0.2, 0.3, 0.4]);
        let rep = is_compatible(&rho, &a, TOL).unwrap();
        // d_S = 1 factor: any tau is allowed, so this is compatible
        assert!(rep.compatible);
        // a coherence across blocks is not
        let mut m = rho.matrix().clone();
        m[(0, 2)] = creal(0.05);
        m[(2, 0)] = creal(0.05);
        let rep = is_compatible(&Operator::from(m), &a, TOL).unwrap();
        assert!(!rep.compatible);
    }

    #[test]
    fn minimal_distortion_state_examples() {
        let full = OperatorSubspace::<f64>::full(3);
        let v = diag(&[0.5, 0.3, 0.2]);
        let s = minimal_distortion_state(&full, Some(&v), TOL).unwrap();
        assert!((s.matrix() - CMatrix::identity(3, 3).scale(1.0 / 3.0)).norm() < 1e-12);

        let (gens, rho) = distorted_algebra_example::<f64>();
        let mut with_rho = gens.clone();
        with_rho.push(rho.clone());
        let g = span(4, &with_rho);
        let sigma = minimal_distortion_state(&g, Some(&rho), TOL).unwrap();
        let zexp: Vec<Operator<f64>> = [0, 3]
            .iter()
            .map(|&k| Operator::from(pauli::<f64>(k).kronecker(&pauli::<f64>(0))))
            .collect();
        assert!(span(4, &zexp).contains(&sigma, 1e-9).unwrap());
        let d = DistortionMap::new(sigma, TOL).unwrap();
        let da = distorted_generated_algebra(&d, &g, TOL).unwrap();
        assert_eq!(da.base.dim(), 4);

        // Example with A rho = rho: sigma = rho and the distorted algebra has rank 1
        let rho = diag(&[0.5, 0.3, 0.2]);
        let g = span(3, &[rho.clone()]);
        let s = minimal_distortion_state(&g, None, TOL).unwrap();
        assert!((s.matrix() - rho.matrix()).norm() < 1e-12);
        let da = distorted_generated_algebra(&DistortionMap::new(s, TOL).unwrap(), &g, TOL).unwrap();
        assert_eq!(da.base.dim(), 1);
    }

    #[test]
    fn minimal_distortion_state_without_positive_element() {
        let g = span(2, &[Operator::from(pauli::<f64>(1))]);
        assert!(matches!(
            minimal_distortion_state(&g, None, TOL),
            Err(QhmError::NoPositiveDefinite)
        ));
    }

    #[test]
    fn restriction_examples() {
        let m = grover::<f64>(8, 1).unwrap();
        let same = restrict_to_support(&m, &Operator::identity(8), &cfg()).unwrap();
        assert_eq!(same.model.dim(), 8);
        let r = reachable_subspace(&m, TOL).unwrap();
        let p = generated_algebra(&r, TOL).unwrap().support_projector(TOL).unwrap();
        let res = restrict_to_support(&m, &p, &cfg()).unwrap();
        assert_eq!(res.model.dim(), 2);
        assert!(res.reduce.validate_cptp(TOL).is_cptp());
        assert!(res.inject.validate_cptp(TOL).is_cptp());
        let full = m.output_trajectory(&m.initial_states()[0], 20).unwrap();
        let red = res.model.output_trajectory(&res.model.initial_states()[0], 20).unwrap();
        for (a, b) in full.iter().zip(&red) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn restriction_rejects_non_invariant_projector() {
        let m = grover::<f64>(8, 1).unwrap();
        let p = diag(&[1.0, 1.0, 0., 0., 0., 0., 0., 0.]);
        assert!(restrict_to_support(&m, &p, &cfg()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn generated_algebra_is_closed_and_idempotent(seed in any::<u64>(), k in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 3;
            // block-structured generators keep the algebra proper
            let ops: Vec<Operator<f64>> = (0..k).map(|_| {
                let h: Operator<f64> = random_hermitian(2, &mut rng);
                let mut m = CMatrix::zeros(n, n);
                m.view_mut((0, 0), (2, 2)).copy_from(h.matrix());
                m[(2, 2)] = creal(0.3);
                Operator::from(m)
            }).collect();
            let a = generated_algebra(&span(n, &ops), TOL).unwrap();
            prop_assert!(a.closure_residual().unwrap() < 1e-9);
            let again = generated_algebra(a.basis(), TOL).unwrap();
            prop_assert_eq!(again.dim(), a.dim());
        }

        #[test]
        fn distorted_algebra_matches_weighted_closure(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 3;
            let sigma: Operator<f64> = random_density(n, &mut rng);
            let gens: Vec<Operator<f64>> = (0..2).map(|_| random_hermitian(n, &mut rng)).collect();
            let d = DistortionMap::new(sigma, TOL).unwrap();
            let g = span(n, &gens);
            let da = distorted_generated_algebra(&d, &g, TOL).unwrap();
            let direct = distorted_closure(&d, &g, TOL).unwrap();
            prop_assert!(da.basis.same_as(&direct, 1e-8));
            prop_assert!(da.closure_residual().unwrap() < 1e-8);
            prop_assert!(da.basis.contains_subspace(&g, 1e-8));
        }
    }
}
