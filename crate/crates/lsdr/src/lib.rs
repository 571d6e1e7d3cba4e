//! Gauss-Christoffel quadrature and Lanczos-Stieltjes machinery for
//! sufficient dimension reduction in deterministic functions.
//!
//! The crate builds discrete probability measures (Gauss, nested
//! Clenshaw-Curtis, tensor, Monte Carlo), turns response samples into
//! orthonormal polynomials and output-space quadrature via the
//! Stieltjes/Lanczos correspondence, and estimates the inverse-regression
//! matrices four ways: the slice-based SIR and SAVE, and their
//! quadrature-based counterparts LSIR and LSAVE. An experiment harness
//! reproduces the convergence studies at desk scale and writes CSV/JSON
//! reports.
//!
//! A guided tour with runnable examples lives in the `book/` directory of
//! the repository; its code snippets run as doc-tests here.
//!
//! ```
//! use lsdr::quadrature::{gauss_rule, MeasureSpec};
//!
//! // 3-point Gauss rule for the uniform probability measure on [-1, 1]:
//! // exact for polynomials up to degree 5.
//! let measure = MeasureSpec::uniform_box(vec![(-1.0, 1.0)]).unwrap();
//! let rule = gauss_rule(&measure, 3).unwrap();
//! let quartic_mean = rule.integrate(|x| x[0].powi(4));
//! assert!((quartic_mean - 0.2).abs() < 1e-14);
//! ```

pub mod error;
pub mod harness;
pub mod lanczos;
pub mod linalg;
pub mod models;
pub mod orthopoly;
pub mod quadrature;
pub mod sdr;

pub use error::{Error, Result};

// The guide's code blocks run as doc-tests so the book cannot drift from
// the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/quadrature.md")]
    mod quadrature {}
    #[doc = include_str!("../../../book/src/orthogonal-polynomials.md")]
    mod orthogonal_polynomials {}
    #[doc = include_str!("../../../book/src/lanczos.md")]
    mod lanczos {}
    #[doc = include_str!("../../../book/src/inverse-regression.md")]
    mod inverse_regression {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
