use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{BilevelProblem, ProjectableSet};
use crate::scalar::Scalar;

/// Dense row-major matrix used for the data set.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    fn sample<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    /// `selfᵀ · v`
    pub fn t_mul(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, &a) in out.iter_mut().zip(row) {
                *o = *o + a * vi;
            }
        }
        out
    }

    /// `self · v`
    pub fn mul(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| linalg::dot(&self.data[i * self.cols..(i + 1) * self.cols], v))
            .collect()
    }

    pub fn frobenius_sq(&self) -> T {
        linalg::norm_sq(&self.data)
    }
}

/// Synthetic data for the linear hyper-representation task: features are
/// `n_feat × m` matrices (one column per sample), responses are
/// `Xᵀ·H_real·w_real`. Training and validation features and responses carry
/// additive Gaussian noise of standard deviation `noise`; the test split is clean.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperRepData<T> {
    pub x_val: Matrix<T>,
    pub x_train: Matrix<T>,
    pub x_test: Matrix<T>,
    pub y_val: Vec<T>,
    pub y_train: Vec<T>,
    pub y_test: Vec<T>,
    pub h_real: Matrix<T>,
    pub w_real: Vec<T>,
    pub noise: T,
    pub seed: u64,
}

impl<T: Scalar> HyperRepData<T> {
    pub fn generate(
        n_feat: usize,
        p_dim: usize,
        m1: usize,
        m2: usize,
        m_test: usize,
        noise: T,
        seed: u64,
    ) -> Result<Self> {
        if n_feat == 0 || p_dim == 0 || m1 == 0 || m2 == 0 || m_test == 0 {
            return Err(Error::Contract("hyper-representation dimensions must be >= 1".into()));
        }
        if !(noise >= T::zero()) {
            return Err(Error::Contract(format!("noise level must be >= 0, got {noise}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h_real = Matrix::sample(n_feat, p_dim, &mut rng);
        let w_real: Vec<T> = (0..p_dim)
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let mut x_train = Matrix::sample(n_feat, m2, &mut rng);
        let mut x_val = Matrix::sample(n_feat, m1, &mut rng);
        let x_test = Matrix::sample(n_feat, m_test, &mut rng);

        let hw = h_real.mul(&w_real);
        let mut y_train = x_train.t_mul(&hw);
        let mut y_val = x_val.t_mul(&hw);
        let y_test = x_test.t_mul(&hw);

        // noise is always drawn so the clean part is identical across noise levels
        let mut perturb = |v: &mut [T]| {
            for vi in v.iter_mut() {
                let eps: f64 = rng.sample(StandardNormal);
                *vi = *vi + noise * T::lit(eps);
            }
        };
        perturb(&mut x_val.data);
        perturb(&mut x_train.data);
        perturb(&mut y_val);
        perturb(&mut y_train);

        Ok(Self {
            x_val,
            x_train,
            x_test,
            y_val,
            y_train,
            y_test,
            h_real,
            w_real,
            noise,
            seed,
        })
    }

    pub fn n_feat(&self) -> usize {
        self.h_real.rows
    }

    pub fn p_dim(&self) -> usize {
        self.h_real.cols
    }

    /// Writes every array as `name,row,col,value` lines with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "name,row,col,value")?;
        let mut dump = |name: &str, rows: usize, cols: usize, data: &[T]| -> io::Result<()> {
            for i in 0..rows {
                for j in 0..cols {
                    writeln!(out, "{name},{i},{j},{:.16e}", data[i * cols + j].as_f64())?;
                }
            }
            Ok(())
        };
        for (name, m) in [
            ("x_val", &self.x_val),
            ("x_train", &self.x_train),
            ("x_test", &self.x_test),
            ("h_real", &self.h_real),
        ] {
            dump(name, m.rows, m.cols, &m.data)?;
        }
        for (name, v) in [
            ("y_val", &self.y_val),
            ("y_train", &self.y_train),
            ("y_test", &self.y_test),
            ("w_real", &self.w_real),
        ] {
            dump(name, v.len(), 1, v)?;
        }
        Ok(())
    }
}

/// `min_H max_w (1/m₁)‖X_valᵀHw − y_val‖²` subject to `w` minimizing
/// `(1/m₂)‖X_trainᵀHw − y_train‖²`, with `x = vec(H)` (row-major) and `y = w`.
#[derive(Debug, Clone)]
pub struct HyperRepProblem<T> {
    data: HyperRepData<T>,
    set_x: ProjectableSet<T>,
    set_y: ProjectableSet<T>,
    lip_upper: T,
    lip_lower: T,
}

fn squared_loss<T: Scalar>(x: &Matrix<T>, hw: &[T], target: &[T]) -> (T, Vec<T>) {
    let mut r = x.t_mul(hw);
    for (ri, &t) in r.iter_mut().zip(target) {
        *ri = *ri - t;
    }
    let m = T::from_usize(target.len()).unwrap();
    (linalg::norm_sq(&r) / m, r)
}

impl<T: Scalar> HyperRepProblem<T> {
    pub fn new(data: HyperRepData<T>) -> Self {
        let n = data.n_feat();
        let p = data.p_dim();
        // ∇²_ww of the losses is (2/m)HᵀXXᵀH; bound it at the scale of H_real
        let h_scale = data.h_real.frobenius_sq().max(T::one());
        let lip = |x: &Matrix<T>| T::two() / T::from_usize(x.cols).unwrap() * x.frobenius_sq() * h_scale;
        let lip_upper = lip(&data.x_val);
        let lip_lower = lip(&data.x_train);
        Self {
            set_x: ProjectableSet::full_space(n * p),
            set_y: ProjectableSet::full_space(p),
            data,
            lip_upper,
            lip_lower,
        }
    }

    pub fn data(&self) -> &HyperRepData<T> {
        &self.data
    }

    fn h(&self, x: &[T]) -> Matrix<T> {
        Matrix {
            rows: self.data.n_feat(),
            cols: self.data.p_dim(),
            data: x.to_vec(),
        }
    }

    /// `(1/m_test)‖X_testᵀHw − y_test‖²`
    pub fn test_loss(&self, x: &[T], w: &[T]) -> T {
        let hw = self.h(x).mul(w);
        squared_loss(&self.data.x_test, &hw, &self.data.y_test).0
    }

    fn loss_grads(&self, feats: &Matrix<T>, target: &[T], x: &[T], w: &[T]) -> (Vec<T>, Vec<T>) {
        let h = self.h(x);
        let hw = h.mul(w);
        let (_, r) = squared_loss(feats, &hw, target);
        let m = T::from_usize(target.len()).unwrap();
        let c = T::two() / m;
        // s = X r, ∇_w = c·Hᵀs, ∇_H = c·s wᵀ
        let s = feats.mul(&r);
        let gw: Vec<T> = h.t_mul(&s).into_iter().map(|v| c * v).collect();
        let mut gh = Vec::with_capacity(x.len());
        for &si in &s {
            for &wk in w {
                gh.push(c * si * wk);
            }
        }
        (gh, gw)
    }

    /// Initial point: `H⁰` and `w⁰` with i.i.d. `N(0, scale²)` entries, `z⁰ = w⁰`.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R, scale: T) -> (Vec<T>, Vec<T>, Vec<T>) {
        let mut draw = |k: usize| -> Vec<T> {
            (0..k)
                .map(|_| scale * T::lit(rng.sample::<f64, _>(StandardNormal)))
                .collect()
        };
        let x = draw(self.dim_x());
        let y = draw(self.dim_y());
        let z = y.clone();
        (x, y, z)
    }
}

impl<T: Scalar> BilevelProblem<T> for HyperRepProblem<T> {
    fn dim_x(&self) -> usize {
        self.data.n_feat() * self.data.p_dim()
    }
    fn dim_y(&self) -> usize {
        self.data.p_dim()
    }
    fn upper(&self, x: &[T], y: &[T]) -> T {
        let hw = self.h(x).mul(y);
        squared_loss(&self.data.x_val, &hw, &self.data.y_val).0
    }
    fn upper_grad_x(&self, x: &[T], y: &[T]) -> Vec<T> {
        self.loss_grads(&self.data.x_val, &self.data.y_val, x, y).0
    }
    fn upper_grad_y(&self, x: &[T], y: &[T]) -> Vec<T> {
        self.loss_grads(&self.data.x_val, &self.data.y_val, x, y).1
    }
    fn lower(&self, x: &[T], y: &[T]) -> T {
        let hw = self.h(x).mul(y);
        squared_loss(&self.data.x_train, &hw, &self.data.y_train).0
    }
    fn lower_grad_x(&self, x: &[T], y: &[T]) -> Vec<T> {
        self.loss_grads(&self.data.x_train, &self.data.y_train, x, y).0
    }
    fn lower_grad_y(&self, x: &[T], y: &[T]) -> Vec<T> {
        self.loss_grads(&self.data.x_train, &self.data.y_train, x, y).1
    }
    fn set_x(&self) -> &ProjectableSet<T> {
        &self.set_x
    }
    fn set_y(&self) -> &ProjectableSet<T> {
        &self.set_y
    }
    fn mu(&self) -> T {
        T::zero()
    }
    fn lip_upper(&self) -> T {
        self.lip_upper
    }
    fn lip_lower(&self) -> T {
        self.lip_lower
    }
    fn assumption_violation(&self) -> Option<&'static str> {
        Some("upper objective is convex, not strongly concave, in w")
    }
}
