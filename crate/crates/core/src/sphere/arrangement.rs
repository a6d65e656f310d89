//! Cell decomposition of the sphere cut by great circles.
//!
//! Cells are produced by successive halving: the first circle yields two
//! hemispheres and every further circle splits each cell it crosses. Each
//! cell records its side (`±1`) of every circle; two cells are adjacent when
//! their side vectors differ in exactly one circle.

use super::{clip_halfspace, GreatCircle, SphericalPolygon};

/// Pieces smaller than this are treated as measure-zero slivers.
const MIN_CELL_AREA: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub polygon: SphericalPolygon,
    /// `signs[c] = +1` when the cell lies on the side `v·n_c ≥ 0`.
    pub signs: Vec<i8>,
    pub neighbors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arrangement {
    circles: Vec<GreatCircle>,
    cells: Vec<Cell>,
}

impl Arrangement {
    /// Distinct circles in input order.
    pub fn circles(&self) -> &[GreatCircle] {
        &self.circles
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// No circles: the sphere is a single cell with no polygon.
    pub fn is_full_sphere(&self) -> bool {
        self.circles.is_empty()
    }
}

/// Removes circles that coincide with an earlier one.
pub fn dedup_circles(circles: &[GreatCircle]) -> Vec<GreatCircle> {
    let mut kept: Vec<GreatCircle> = Vec::with_capacity(circles.len());
    for c in circles {
        if !kept.iter().any(|k| k.coincides(c)) {
            kept.push(*c);
        }
    }
    kept
}

pub fn build_arrangement(circles: &[GreatCircle]) -> Arrangement {
    let circles = dedup_circles(circles);
    let Some(first) = circles.first() else {
        return Arrangement {
            circles,
            cells: Vec::new(),
        };
    };
    let n0 = first.normal();
    let mut cells: Vec<(SphericalPolygon, Vec<i8>)> = vec![
        (SphericalPolygon::hemisphere(n0), vec![1]),
        (SphericalPolygon::hemisphere(-n0), vec![-1]),
    ];
    for c in &circles[1..] {
        let n = c.normal();
        let mut next = Vec::with_capacity(cells.len() * 2);
        for (poly, signs) in &cells {
            for (side, normal) in [(1i8, n), (-1i8, -n)] {
                for piece in clip_halfspace(poly, &normal) {
                    if piece.area() > MIN_CELL_AREA {
                        let mut s = signs.clone();
                        s.push(side);
                        next.push((piece, s));
                    }
                }
            }
        }
        cells = next;
    }

    let neighbors: Vec<Vec<usize>> = (0..cells.len())
        .map(|i| {
            (0..cells.len())
                .filter(|&j| {
                    j != i
                        && cells[i]
                            .1
                            .iter()
                            .zip(&cells[j].1)
                            .filter(|(a, b)| a != b)
                            .count()
                            == 1
                })
                .collect()
        })
        .collect();

    Arrangement {
        circles,
        cells: cells
            .into_iter()
            .zip(neighbors)
            .map(|((polygon, signs), neighbors)| Cell {
                polygon,
                signs,
                neighbors,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vec3;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn circle(x: f64, y: f64, z: f64) -> GreatCircle {
        GreatCircle::new(Vec3::new(x, y, z)).unwrap()
    }

    #[test]
    fn single_circle_gives_two_hemispheres() {
        let a = build_arrangement(&[circle(0.0, 0.0, 1.0)]);
        assert_eq!(a.cells().len(), 2);
        for c in a.cells() {
            assert_relative_eq!(c.polygon.area(), TAU, epsilon = 1e-13);
            assert_eq!(c.neighbors.len(), 1);
        }
    }

    #[test]
    fn coordinate_circles_give_octants() {
        let a = build_arrangement(&[circle(1.0, 0.0, 0.0), circle(0.0, 1.0, 0.0), circle(0.0, 0.0, 1.0)]);
        assert_eq!(a.cells().len(), 8);
        for c in a.cells() {
            assert_relative_eq!(c.polygon.area(), FRAC_PI_2, epsilon = 1e-13);
            assert_eq!(c.neighbors.len(), 3);
            for ang in c.polygon.interior_angles() {
                assert!(ang < PI + 1e-9);
            }
        }
    }

    #[test]
    fn duplicate_circles_are_merged() {
        let a = build_arrangement(&[circle(0.0, 0.0, 1.0), circle(0.0, 0.0, -2.0)]);
        assert_eq!(a.circles().len(), 1);
        assert_eq!(a.cells().len(), 2);
    }

    #[test]
    fn no_circles_is_the_full_sphere() {
        let a = build_arrangement(&[]);
        assert!(a.is_full_sphere());
        assert!(a.cells().is_empty());
    }

    #[test]
    fn generic_circles_partition_the_sphere() {
        let cs = [
            circle(0.3, 0.4, 0.8),
            circle(-0.7, 0.2, 0.1),
            circle(0.1, -0.9, 0.3),
            circle(0.5, 0.5, -0.6),
        ];
        let a = build_arrangement(&cs);
        // c circles in general position: c(c − 1) + 2 cells.
        assert_eq!(a.cells().len(), 14);
        let total: f64 = a.cells().iter().map(|c| c.polygon.area()).sum();
        assert_relative_eq!(total, 4.0 * PI, epsilon = 1e-10);
    }
}
