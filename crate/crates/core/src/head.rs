//! Scalar-to-scalar transformation appended after the SSM.
//!
//! The parametric head is a two-hidden-layer ReLU network
//! `z -> D_out . relu(D_hidden . relu(D_in z))`. The ReLU subderivative at
//! zero is taken to be zero.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SsmError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead<T> {
    width: usize,
    d_in: Vec<T>,
    /// Row-major `width x width`.
    d_hidden: Vec<T>,
    d_out: Vec<T>,
}

/// Gradients with the shape of an [`MlpHead`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients<T> {
    pub d_in: Vec<T>,
    pub d_hidden: Vec<T>,
    pub d_out: Vec<T>,
}

impl<T: Scalar> HeadGradients<T> {
    pub fn zeros(width: usize) -> Self {
        Self {
            d_in: vec![T::zero(); width],
            d_hidden: vec![T::zero(); width * width],
            d_out: vec![T::zero(); width],
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (dst, src) in [
            (&mut self.d_in, &other.d_in),
            (&mut self.d_hidden, &other.d_hidden),
            (&mut self.d_out, &other.d_out),
        ] {
            for (x, &y) in dst.iter_mut().zip(src) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for x in self.d_in.iter_mut().chain(&mut self.d_hidden).chain(&mut self.d_out) {
            *x *= s;
        }
    }

    /// Flattened in the order `D_in, D_hidden, D_out`.
    pub fn flatten(&self) -> Vec<T> {
        let mut v = self.d_in.clone();
        v.extend_from_slice(&self.d_hidden);
        v.extend_from_slice(&self.d_out);
        v
    }
}

struct Activations<T> {
    pre1: Vec<T>,
    post1: Vec<T>,
    pre2: Vec<T>,
    post2: Vec<T>,
}

#[inline]
fn relu<T: Scalar>(x: T) -> T {
    x.max(T::zero())
}

#[inline]
fn relu_prime<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}

impl<T: Scalar> MlpHead<T> {
    pub fn new(d_in: Vec<T>, d_hidden: Vec<T>, d_out: Vec<T>) -> Result<Self> {
        let width = d_in.len();
        if width == 0 || d_out.len() != width || d_hidden.len() != width * width {
            return Err(SsmError::Dimension(format!(
                "head shapes inconsistent: D_in {}, D_hidden {}, D_out {}",
                d_in.len(),
                d_hidden.len(),
                d_out.len()
            )));
        }
        if !d_in.iter().chain(&d_hidden).chain(&d_out).all(|v| v.is_finite()) {
            return Err(SsmError::NonFinite("head parameters"));
        }
        Ok(Self { width, d_in, d_hidden, d_out })
    }

    /// `D_in = 1`, `D_hidden = I`, `D_out = 1^T / 2`.
    pub fn teacher(width: usize) -> Self {
        let mut d_hidden = vec![T::zero(); width * width];
        for i in 0..width {
            d_hidden[i * width + i] = T::one();
        }
        Self {
            width,
            d_in: vec![T::one(); width],
            d_hidden,
            d_out: vec![T::lit(0.5); width],
        }
    }

    /// All entries i.i.d. `N(0, sd)`.
    pub fn random<R: Rng + ?Sized>(width: usize, sd: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, sd).expect("finite standard deviation");
        let mut draw = |n: usize| -> Vec<T> { (0..n).map(|_| T::lit(normal.sample(rng))).collect() };
        let d_in = draw(width);
        let d_hidden = draw(width * width);
        let d_out = draw(width);
        Self { width, d_in, d_hidden, d_out }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn d_in(&self) -> &[T] {
        &self.d_in
    }

    pub fn d_hidden(&self) -> &[T] {
        &self.d_hidden
    }

    pub fn d_out(&self) -> &[T] {
        &self.d_out
    }

    pub fn num_params(&self) -> usize {
        self.width * (self.width + 2)
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut v = self.d_in.clone();
        v.extend_from_slice(&self.d_hidden);
        v.extend_from_slice(&self.d_out);
        v
    }

    /// Overwrites the parameters from a slice laid out as [`Self::flatten`].
    pub fn assign_flat(&mut self, flat: &[T]) {
        let w = self.width;
        self.d_in.copy_from_slice(&flat[..w]);
        self.d_hidden.copy_from_slice(&flat[w..w + w * w]);
        self.d_out.copy_from_slice(&flat[w + w * w..w * (w + 2)]);
    }

    fn activations(&self, z: T) -> Activations<T> {
        let w = self.width;
        let pre1: Vec<T> = self.d_in.iter().map(|&v| v * z).collect();
        let post1: Vec<T> = pre1.iter().map(|&v| relu(v)).collect();
        let pre2: Vec<T> = (0..w)
            .map(|i| {
                self.d_hidden[i * w..(i + 1) * w]
                    .iter()
                    .zip(&post1)
                    .map(|(&m, &h)| m * h)
                    .sum()
            })
            .collect();
        let post2 = pre2.iter().map(|&v| relu(v)).collect();
        Activations { pre1, post1, pre2, post2 }
    }

    pub fn forward(&self, z: T) -> T {
        let act = self.activations(z);
        self.d_out.iter().zip(&act.post2).map(|(&o, &h)| o * h).sum()
    }

    /// `d/dz` of [`Self::forward`].
    pub fn input_derivative(&self, z: T) -> T {
        let w = self.width;
        let act = self.activations(z);
        let mut xi = T::zero();
        for i in 0..w {
            let gate2 = relu_prime(act.pre2[i]);
            if gate2 == T::zero() {
                continue;
            }
            let inner: T = (0..w)
                .map(|k| self.d_hidden[i * w + k] * relu_prime(act.pre1[k]) * self.d_in[k])
                .sum();
            xi += self.d_out[i] * gate2 * inner;
        }
        xi
    }

    /// Reverse-mode gradients of `upstream * forward(z)` with respect to the
    /// three parameter matrices.
    pub fn param_gradients(&self, z: T, upstream: T) -> HeadGradients<T> {
        let w = self.width;
        let act = self.activations(z);
        let d_out: Vec<T> = act.post2.iter().map(|&h| h * upstream).collect();
        let delta2: Vec<T> = (0..w)
            .map(|i| upstream * self.d_out[i] * relu_prime(act.pre2[i]))
            .collect();
        let mut d_hidden = vec![T::zero(); w * w];
        for i in 0..w {
            for k in 0..w {
                d_hidden[i * w + k] = delta2[i] * act.post1[k];
            }
        }
        let d_in: Vec<T> = (0..w)
            .map(|k| {
                let back: T = (0..w).map(|i| self.d_hidden[i * w + k] * delta2[i]).sum();
                back * relu_prime(act.pre1[k]) * z
            })
            .collect();
        HeadGradients { d_in, d_hidden, d_out }
    }

    /// Smallest absolute preactivation at `z`; small values mean `z` sits near a kink.
    pub fn kink_margin(&self, z: T) -> T {
        let act = self.activations(z);
        act.pre1
            .iter()
            .chain(&act.pre2)
            .fold(T::infinity(), |m, v| m.min(v.abs()))
    }
}

/// The head applied after the SSM: either the identity or a ReLU MLP.
#[derive(Debug, Clone, PartialEq)]
pub enum Head<T> {
    Identity,
    Mlp(MlpHead<T>),
}

/// Head whose forward map is `z -> z`.
pub fn identity_head<T>() -> Head<T> {
    Head::Identity
}

impl<T: Scalar> Head<T> {
    #[inline]
    pub fn forward(&self, z: T) -> T {
        match self {
            Head::Identity => z,
            Head::Mlp(h) => h.forward(z),
        }
    }

    #[inline]
    pub fn input_derivative(&self, z: T) -> T {
        match self {
            Head::Identity => T::one(),
            Head::Mlp(h) => h.input_derivative(z),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Head::Identity)
    }

    pub fn num_params(&self) -> usize {
        match self {
            Head::Identity => 0,
            Head::Mlp(h) => h.num_params(),
        }
    }

    pub fn mlp(&self) -> Option<&MlpHead<T>> {
        match self {
            Head::Identity => None,
            Head::Mlp(h) => Some(h),
        }
    }
}
