//! Fully symmetric quadrature rules on the reference triangle
//! `{(0,0), (1,0), (0,1)}`.

use crate::error::{Error, Result};

/// Points in barycentric coordinates `(λ0, λ1, λ2)`; the reference
/// coordinates are `(λ1, λ2)`. Weights sum to the reference area 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    degree: usize,
}

impl QuadratureRule {
    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Highest total polynomial degree integrated exactly.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integral of `f(ξ, η)` over the reference triangle.
    pub fn integrate_reference(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[1], p[2]))
            .sum()
    }
}

enum Orbit {
    Centroid { w: f64 },
    /// `(a, a, 1 - 2a)` and permutations.
    Edge { a: f64, w: f64 },
    /// `(a, b, 1 - a - b)` and permutations.
    General { a: f64, b: f64, w: f64 },
}

use Orbit::*;

// Weights below are normalised to sum to one.
const DEGREE_1: &[Orbit] = &[Centroid { w: 1.0 }];

const DEGREE_2: &[Orbit] = &[Edge {
    a: 1.0 / 6.0,
    w: 1.0 / 3.0,
}];

const DEGREE_4: &[Orbit] = &[
    Edge {
        a: 0.445_948_490_915_964_886_32,
        w: 0.223_381_589_678_011_465_7,
    },
    Edge {
        a: 0.091_576_213_509_770_743_46,
        w: 0.109_951_743_655_321_867_64,
    },
];

const DEGREE_5: &[Orbit] = &[
    Centroid { w: 0.225 },
    Edge {
        a: 0.470_142_064_105_115_089_77,
        w: 0.132_394_152_788_506_180_74,
    },
    Edge {
        a: 0.101_286_507_323_456_338_8,
        w: 0.125_939_180_544_827_152_6,
    },
];

const DEGREE_6: &[Orbit] = &[
    Edge {
        a: 0.249_286_745_170_910_421_29,
        w: 0.116_786_275_726_379_366_03,
    },
    Edge {
        a: 0.063_089_014_491_502_228_34,
        w: 0.050_844_906_370_206_816_921,
    },
    General {
        a: 0.053_145_049_844_816_947_353,
        b: 0.310_352_451_033_784_405_42,
        w: 0.082_851_075_618_373_575_194,
    },
];

const DEGREE_8: &[Orbit] = &[
    Centroid {
        w: 0.144_315_607_677_787_168_25,
    },
    Edge {
        a: 0.459_292_588_292_723_156_03,
        w: 0.095_091_634_267_284_624_794,
    },
    Edge {
        a: 0.170_569_307_751_760_206_62,
        w: 0.103_217_370_534_718_250_28,
    },
    Edge {
        a: 0.050_547_228_317_030_975_458,
        w: 0.032_458_497_623_198_080_311,
    },
    General {
        a: 0.008_394_777_409_957_605_337_2,
        b: 0.263_112_829_634_638_113_42,
        w: 0.027_230_314_174_434_994_265,
    },
];

const DEGREE_9: &[Orbit] = &[
    Centroid {
        w: 0.097_135_796_282_798_833_819,
    },
    Edge {
        a: 0.489_682_519_198_737_627_78,
        w: 0.031_334_700_227_139_070_537,
    },
    Edge {
        a: 0.437_089_591_492_936_637_27,
        w: 0.077_827_541_004_774_279_317,
    },
    Edge {
        a: 0.188_203_535_619_032_730_24,
        w: 0.079_647_738_927_210_253_033,
    },
    Edge {
        a: 0.044_729_513_394_452_709_865,
        w: 0.025_577_675_658_698_031_262,
    },
    General {
        a: 0.036_838_412_054_736_283_635,
        b: 0.221_962_989_160_765_695_68,
        w: 0.043_283_539_377_289_377_289,
    },
];

const DEGREE_10: &[Orbit] = &[
    Centroid {
        w: 0.090_817_990_382_753_580_095,
    },
    Edge {
        a: 0.485_577_633_383_657_377_37,
        w: 0.036_725_957_756_466_704_717,
    },
    Edge {
        a: 0.109_481_575_485_037_054_8,
        w: 0.045_321_059_435_527_934_783,
    },
    General {
        a: 0.141_707_219_414_879_954_76,
        b: 0.307_939_838_764_120_950_17,
        w: 0.072_757_916_845_420_108_604,
    },
    General {
        a: 0.025_003_534_762_686_386_074,
        b: 0.246_672_560_639_902_693_92,
        w: 0.028_327_242_531_057_484_837,
    },
    General {
        a: 0.009_540_815_400_299_457_580_2,
        b: 0.066_803_251_012_200_265_774,
        w: 0.009_421_666_963_732_823_459_9,
    },
];

fn expand(orbits: &[Orbit], degree: usize) -> QuadratureRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for orbit in orbits {
        match *orbit {
            Centroid { w } => {
                points.push([1.0 / 3.0; 3]);
                weights.push(0.5 * w);
            }
            Edge { a, w } => {
                let c = 1.0 - 2.0 * a;
                for p in [[a, a, c], [a, c, a], [c, a, a]] {
                    points.push(p);
                    weights.push(0.5 * w);
                }
            }
            General { a, b, w } => {
                let c = 1.0 - a - b;
                for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                    points.push(p);
                    weights.push(0.5 * w);
                }
            }
        }
    }
    QuadratureRule {
        points,
        weights,
        degree,
    }
}

/// Smallest tabulated rule exact to at least `degree`.
pub fn quadrature_rule(degree: usize) -> Result<QuadratureRule> {
    let rule = match degree {
        1 => expand(DEGREE_1, 1),
        2 => expand(DEGREE_2, 2),
        3 | 4 => expand(DEGREE_4, 4),
        5 => expand(DEGREE_5, 5),
        6 => expand(DEGREE_6, 6),
        7 | 8 => expand(DEGREE_8, 8),
        9 => expand(DEGREE_9, 9),
        10 => expand(DEGREE_10, 10),
        _ => return Err(Error::UnsupportedDegree(degree)),
    };
    Ok(rule)
}
