//! State space bundle: a spectrum plus, for torus models, the geometric
//! basis and a cached evaluation grid.
//!
//! The sup-type norm `e_norm` dispatches on the geometry: torus spaces
//! evaluate the field on a resolved uniform grid; abstract spaces use the
//! coefficient L2 norm (the E and H norms coincide there by convention).

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectrum::{h_norm_slice, Spectrum};
use crate::torus::{e_norm_with_table, GridTable, TorusBasis};

#[derive(Clone, Debug)]
pub struct Space<T> {
    spectrum: Spectrum<T>,
    geometry: Option<TorusGeometry<T>>,
}

#[derive(Clone, Debug)]
pub struct TorusGeometry<T> {
    pub basis: TorusBasis<T>,
    pub table: GridTable<T>,
}

impl<T: Real> Space<T> {
    /// Abstract diagonal model: no geometry, `E = H` on coefficients.
    pub fn abstract_space(spectrum: Spectrum<T>) -> Self {
        Space {
            spectrum,
            geometry: None,
        }
    }

    /// Torus model. The evaluation grid defaults to the smallest exact one
    /// (`2 * max_freq + 1` points per axis) and may only be refined.
    pub fn torus(
        basis: TorusBasis<T>,
        spectrum: Spectrum<T>,
        grid: Option<usize>,
    ) -> Result<Self> {
        if spectrum.basis_tag() != basis.tag() {
            return Err(Error::BasisMismatch {
                coeffs: spectrum.basis_tag().0,
                basis: basis.tag().0,
            });
        }
        if spectrum.len() != basis.len() {
            return Err(Error::LengthMismatch {
                got: spectrum.len(),
                available: basis.len(),
            });
        }
        let min_grid = (2 * basis.max_freq() + 1) as usize;
        let n = grid.unwrap_or(min_grid).max(min_grid);
        let table = GridTable::build(&basis, n)?;
        Ok(Space {
            spectrum,
            geometry: Some(TorusGeometry { basis, table }),
        })
    }

    pub fn spectrum(&self) -> &Spectrum<T> {
        &self.spectrum
    }

    pub fn geometry(&self) -> Option<&TorusGeometry<T>> {
        self.geometry.as_ref()
    }

    pub fn basis(&self) -> Option<&TorusBasis<T>> {
        self.geometry.as_ref().map(|g| &g.basis)
    }

    pub fn is_torus(&self) -> bool {
        self.geometry.is_some()
    }

    /// Replaces the spectrum's drift shift, keeping geometry and identity.
    pub fn with_lambda(&self, lambda: T) -> Self {
        Space {
            spectrum: self.spectrum.with_lambda(lambda),
            geometry: self.geometry.clone(),
        }
    }

    /// Replaces the truncation ranks, keeping geometry and identity.
    pub fn with_ranks(&self, n_v: usize, n_z: usize) -> Result<Self> {
        Ok(Space {
            spectrum: self.spectrum.with_ranks(n_v, n_z)?,
            geometry: self.geometry.clone(),
        })
    }

    /// Sup-type norm of a coefficient vector.
    pub fn e_norm(&self, x: &[T]) -> Result<T> {
        match &self.geometry {
            Some(geo) => e_norm_with_table(x, &geo.basis, &geo.table),
            None => Ok(h_norm_slice(x)),
        }
    }

    /// `kappa` with `|<x, e_i>| <= kappa |x|_E` for every mode: 1 in the
    /// abstract case, `nrm (2 pi)^d (2 / pi)` on the torus (the L1 norm of a
    /// unit mode, since its trig factor averages `2 / pi` in modulus).
    pub fn coordinate_bound_factor(&self) -> T {
        match &self.geometry {
            None => T::one(),
            Some(geo) => {
                let d = geo.basis.d() as i32;
                let vol = (2.0 * std::f64::consts::PI).powi(d);
                geo.basis.norm_const() * T::of(vol * 2.0 / std::f64::consts::PI)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::build_torus_basis;

    #[test]
    fn abstract_e_norm_is_the_coefficient_norm() {
        let s = Spectrum::<f64>::quadratic_growth(4, 0.0, 2, 4).unwrap();
        let sp = Space::abstract_space(s);
        let x = [3.0, 4.0, 0.0, 0.0];
        assert!((sp.e_norm(&x).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn torus_space_checks_tags_and_lengths() {
        let b = build_torus_basis::<f64>(2, 1.0, 1.0).unwrap();
        let s_ok = b.ns_spectrum(0.5, 0.0, 2, 4).unwrap();
        assert!(Space::torus(b.clone(), s_ok, None).is_ok());
        let s_alien = Spectrum::quadratic_growth(4, 0.0, 2, 4).unwrap();
        assert!(matches!(
            Space::torus(b, s_alien, None),
            Err(Error::BasisMismatch { .. })
        ));
    }

    #[test]
    fn torus_e_norm_dispatch_bounds_single_mode() {
        let b = build_torus_basis::<f64>(2, 1.0, 1.0).unwrap();
        let s = b.ns_spectrum(0.5, 0.0, 2, 4).unwrap();
        let sp = Space::torus(b, s, None).unwrap();
        let nrm = sp.basis().unwrap().norm_const();
        let got = sp.e_norm(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((got - nrm).abs() < 1e-12);
    }

    #[test]
    fn lambda_swap_preserves_geometry() {
        let b = build_torus_basis::<f64>(2, 1.0, 1.0).unwrap();
        let s = b.ns_spectrum(0.5, 0.0, 2, 4).unwrap();
        let sp = Space::torus(b, s, None).unwrap();
        let sp7 = sp.with_lambda(7.0);
        assert!(sp7.is_torus());
        assert!((sp7.spectrum().lambda() - 7.0).abs() < 1e-15);
        assert_eq!(sp7.spectrum().basis_tag(), sp.spectrum().basis_tag());
    }
}
