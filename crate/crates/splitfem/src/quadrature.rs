//! Quadrature rules on the reference triangle and reference edge.
//!
//! Triangle weights sum to the reference area 1/2; a physical integral
//! over a triangle of area `A` is `2A * sum(w_q f(x_q))`. Edge weights
//! sum to 1 on the reference segment [0, 1].

/// Symmetric quadrature rule in barycentric coordinates.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Highest polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    /// Smallest symmetric rule exact for polynomials of degree
    /// at least `degree` (supported up to 4).
    pub fn triangle(degree: usize) -> QuadratureRule {
        match degree {
            0 | 1 => QuadratureRule {
                points: vec![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]],
                weights: vec![0.5],
                degree: 1,
            },
            2 => {
                // Edge-midpoint rule.
                let points = vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
                QuadratureRule {
                    points,
                    weights: vec![1.0 / 6.0; 3],
                    degree: 2,
                }
            }
            3 | 4 => {
                // Six-point degree-4 rule (two symmetric orbits).
                let a1 = 0.445948490915965;
                let b1 = 1.0 - 2.0 * a1;
                let w1 = 0.223381589678011 / 2.0;
                let a2 = 0.091576213509771;
                let b2 = 1.0 - 2.0 * a2;
                let w2 = 0.109951743655322 / 2.0;
                QuadratureRule {
                    points: vec![
                        [a1, a1, b1],
                        [a1, b1, a1],
                        [b1, a1, a1],
                        [a2, a2, b2],
                        [a2, b2, a2],
                        [b2, a2, a2],
                    ],
                    weights: vec![w1, w1, w1, w2, w2, w2],
                    degree: 4,
                }
            }
            d => panic!("no triangle rule of degree {d} available"),
        }
    }

    /// The rule used for all volume terms: exact for products of two
    /// quadratic basis functions.
    pub fn volume_default() -> QuadratureRule {
        Self::triangle(4)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Two-point Gauss rule on the reference edge [0, 1] (exact through
/// degree 3), used for the gradient-jump terms.
#[derive(Debug, Clone)]
pub struct EdgeQuadrature {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl EdgeQuadrature {
    pub fn gauss2() -> EdgeQuadrature {
        let d = 0.5 / 3f64.sqrt();
        EdgeQuadrature {
            points: vec![0.5 - d, 0.5 + d],
            weights: vec![0.5, 0.5],
            degree: 3,
        }
    }
}
