//! Dense vector math on plain slices.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Norm used to bring embeddings and centroids to unit length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Norm {
    #[default]
    L1,
    L2,
}

impl Norm {
    pub fn of<T: Scalar>(self, v: &[T]) -> T {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => dot(v, v).sqrt(),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
        })
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            other => Err(Error::Config(format!("unknown norm `{other}`"))),
        }
    }
}

#[inline]
pub fn dot<T: Scalar>(u: &[T], v: &[T]) -> T {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(&a, &b)| a * b).sum()
}

#[inline]
pub fn l2_norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

#[inline]
pub fn squared_euclidean<T: Scalar>(u: &[T], v: &[T]) -> T {
    u.iter().zip(v).map(|(&a, &b)| (a - b) * (a - b)).sum()
}

/// Cosine similarity `dot(u, v) / (|u|_2 |v|_2)`.
pub fn cosine_sim<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::domain(format!("dimension mismatch: {} vs {}", u.len(), v.len())));
    }
    let nu = l2_norm(u);
    let nv = l2_norm(v);
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::domain("cosine similarity of a zero vector"));
    }
    let c = dot(u, v) / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Cosine similarity when the L2 norms are already known and nonzero.
#[inline]
pub(crate) fn cosine_with_norms<T: Scalar>(u: &[T], nu: T, v: &[T], nv: T) -> T {
    let c = dot(u, v) / (nu * nv);
    c.max(-T::one()).min(T::one())
}

/// Scales `v` to unit length under `norm`.
pub fn normalize<T: Scalar>(v: &[T], norm: Norm) -> Result<Vec<T>> {
    let mut out = v.to_vec();
    normalize_in_place(&mut out, norm)?;
    Ok(out)
}

pub fn normalize_in_place<T: Scalar>(v: &mut [T], norm: Norm) -> Result<()> {
    let n = norm.of(v);
    if n == T::zero() || !n.is_finite() {
        return Err(Error::domain("cannot normalize a zero or non-finite vector"));
    }
    for x in v.iter_mut() {
        *x = *x / n;
    }
    Ok(())
}

/// `acc += v`
#[inline]
pub fn add_assign<T: Scalar>(acc: &mut [T], v: &[T]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a = *a + b;
    }
}

/// Uniformly distributed direction, scaled to unit length under `norm`.
pub fn random_unit_vector<T: Scalar, R: Rng + ?Sized>(dim: usize, norm: Norm, rng: &mut R) -> Vec<T> {
    loop {
        // Box-Muller pairs give an isotropic direction.
        let mut v: Vec<T> = (0..dim).map(|_| T::lit(standard_normal(rng))).collect();
        if normalize_in_place(&mut v, norm).is_ok() {
            return v;
        }
    }
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
