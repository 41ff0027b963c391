//! Reference layer-fusion methods.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{Laplacian, MultilayerGraph};

/// Laplacian of the entrywise mean adjacency `(1/S) Σ_s W^s`.
pub fn arithmetic_mean(g: &MultilayerGraph) -> Laplacian {
    g.mean_weights().laplacian()
}

/// Named fusion baselines. Only the arithmetic mean is implemented; the
/// manifold means are reserved identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Baseline {
    ArithmeticMean,
    /// Projection mean on the Grassmann manifold.
    ProjectionMean,
    /// Geometric mean on the SPD manifold.
    GeometricMean,
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::ArithmeticMean => "arithmetic-mean",
            Baseline::ProjectionMean => "projection-mean",
            Baseline::GeometricMean => "geometric-mean",
        }
    }

    pub fn fuse(&self, g: &MultilayerGraph) -> Result<Laplacian> {
        match self {
            Baseline::ArithmeticMean => Ok(arithmetic_mean(g)),
            other => Err(Error::NotImplemented(format!(
                "baseline {:?}",
                other.name()
            ))),
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arithmetic-mean" => Ok(Baseline::ArithmeticMean),
            "projection-mean" => Ok(Baseline::ProjectionMean),
            "geometric-mean" => Ok(Baseline::GeometricMean),
            _ => Err(Error::InvalidArgument(format!("unknown baseline {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Layer;

    #[test]
    fn single_layer_is_identity() {
        let layer = Layer::from_edges("a", 4, [(0, 1), (2, 3), (1, 3)]).unwrap();
        let g = MultilayerGraph::new(vec![layer.clone()]).unwrap();
        assert_eq!(arithmetic_mean(&g), layer.laplacian());
        let twice =
            MultilayerGraph::new(vec![layer.clone(), layer.clone().with_name("b")]).unwrap();
        assert_eq!(arithmetic_mean(&twice), layer.laplacian());
    }

    #[test]
    fn averages_two_paths() {
        let a = Layer::from_edges("a", 3, [(0, 1)]).unwrap();
        let b = Layer::from_edges("b", 3, [(1, 2)]).unwrap();
        let g = MultilayerGraph::new(vec![a, b]).unwrap();
        let w = arithmetic_mean(&g).to_weights().unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.0, 0.5]);
    }

    #[test]
    fn reserved_baselines() {
        let g = MultilayerGraph::new(vec![Layer::from_edges("a", 3, [(0, 1)]).unwrap()]).unwrap();
        for name in ["projection-mean", "geometric-mean"] {
            let b: Baseline = name.parse().unwrap();
            assert!(matches!(b.fuse(&g), Err(Error::NotImplemented(_))));
        }
        assert!("median".parse::<Baseline>().is_err());
        assert_eq!(Baseline::ArithmeticMean.to_string(), "arithmetic-mean");
    }
}
