//! Candidate symbol alphabets and the superconstellation.
//!
//! Every constellation is normalized to unit average symbol power. The
//! superconstellation is the deduplicated union of all candidate points
//! together with a membership map telling, for each point, which candidates
//! contain it. QPSK uses the odd multiples of `pi/4`, so its four points are a
//! subset of 8-PSK and the membership of a shared point is genuinely plural —
//! the mixture model relies on that nesting.

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::{Error, Result};

/// Two distinct constellation points are never closer than ~0.39, so this
/// tolerance only has to absorb floating-point rounding of coincident points.
pub const COINCIDENCE_TOL: f64 = 1e-9;

/// Supported constellation labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstellationKind {
    Qpsk,
    Psk8,
    Qam16,
}

impl ConstellationKind {
    pub const ALL: [ConstellationKind; 3] = [
        ConstellationKind::Qpsk,
        ConstellationKind::Psk8,
        ConstellationKind::Qam16,
    ];

    /// Lowercase label used in config files and CLI flags.
    pub fn label(self) -> &'static str {
        match self {
            ConstellationKind::Qpsk => "qpsk",
            ConstellationKind::Psk8 => "8psk",
            ConstellationKind::Qam16 => "16qam",
        }
    }
}

impl fmt::Display for ConstellationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ConstellationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qpsk" => Ok(ConstellationKind::Qpsk),
            "8psk" | "psk8" => Ok(ConstellationKind::Psk8),
            "16qam" | "qam16" => Ok(ConstellationKind::Qam16),
            other => Err(Error::UnsupportedKind(other.to_string())),
        }
    }
}

/// A finite symbol alphabet scaled to unit average power, with a
/// deterministic point ordering (by angle, then magnitude).
#[derive(Debug, Clone)]
pub struct Constellation {
    kind: ConstellationKind,
    points: Vec<Complex64>,
}

impl Constellation {
    /// Builds the standard point set for `kind`, scaled so that the mean of
    /// `|p|^2` is exactly one.
    pub fn new(kind: ConstellationKind) -> Self {
        let mut points: Vec<Complex64> = match kind {
            // Odd multiples of pi/4: the (+-1 +- j)/sqrt(2) points, phased so
            // that QPSK is a subset of 8-PSK.
            ConstellationKind::Qpsk => [1u32, 3, 5, 7]
                .iter()
                .map(|&k| Complex64::from_polar(1.0, k as f64 * FRAC_PI_4))
                .collect(),
            ConstellationKind::Psk8 => (0u32..8)
                .map(|k| Complex64::from_polar(1.0, k as f64 * FRAC_PI_4))
                .collect(),
            // {+-1, +-3}^2 grid has mean power 10.
            ConstellationKind::Qam16 => {
                let scale = 1.0 / 10f64.sqrt();
                let levels = [-3.0, -1.0, 1.0, 3.0];
                levels
                    .iter()
                    .flat_map(|&re| {
                        levels
                            .iter()
                            .map(move |&im| Complex64::new(re * scale, im * scale))
                    })
                    .collect()
            }
        };
        points.sort_by(|a, b| {
            angle_key(*a)
                .total_cmp(&angle_key(*b))
                .then(a.norm().total_cmp(&b.norm()))
        });
        Constellation { kind, points }
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Cardinality `|a|`.
    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// Mean of `|p|^2` over the points; one by construction.
    pub fn average_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }
}

/// Angle in `[0, 2*pi)` used as the primary sort key for points.
fn angle_key(p: Complex64) -> f64 {
    let a = p.im.atan2(p.re);
    if a < 0.0 {
        a + std::f64::consts::TAU
    } else {
        a
    }
}

/// The candidate set: member constellations, the deduplicated union of their
/// points, and the point-to-member membership map.
#[derive(Debug, Clone)]
pub struct ConstellationSet {
    members: Vec<Constellation>,
    super_points: Vec<Complex64>,
    /// For each super point, the sorted member indices containing it.
    membership: Vec<Vec<usize>>,
    /// For each member, the super-point index of each of its points.
    member_point_super: Vec<Vec<usize>>,
    /// Every admissible (super point, member) pair: for each member in order,
    /// its points in order. Length is the sum of member cardinalities.
    pairs: Vec<(usize, usize)>,
}

impl ConstellationSet {
    /// Builds the set from distinct kinds. Points closer than
    /// [`COINCIDENCE_TOL`] are merged into a single super point.
    pub fn new(kinds: &[ConstellationKind]) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::EmptyInput("constellation kinds"));
        }
        for (i, k) in kinds.iter().enumerate() {
            if kinds[..i].contains(k) {
                return Err(Error::DuplicateKind(k.label().to_string()));
            }
        }
        let members: Vec<Constellation> = kinds.iter().map(|&k| Constellation::new(k)).collect();

        let mut super_points: Vec<Complex64> = Vec::new();
        for m in &members {
            for &p in m.points() {
                if !super_points
                    .iter()
                    .any(|&q| (p - q).norm() <= COINCIDENCE_TOL)
                {
                    super_points.push(p);
                }
            }
        }
        super_points.sort_by(|a, b| {
            angle_key(*a)
                .total_cmp(&angle_key(*b))
                .then(a.norm().total_cmp(&b.norm()))
        });

        let membership: Vec<Vec<usize>> = super_points
            .iter()
            .map(|&p| {
                members
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| m.points().iter().any(|&q| (p - q).norm() <= COINCIDENCE_TOL))
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        debug_assert!(membership.iter().all(|s| !s.is_empty()));

        let member_point_super: Vec<Vec<usize>> = members
            .iter()
            .map(|m| {
                m.points()
                    .iter()
                    .map(|&q| {
                        let idx = super_points
                            .iter()
                            .position(|&p| (p - q).norm() <= COINCIDENCE_TOL)
                            .expect("member point missing from superconstellation");
                        idx
                    })
                    .collect()
            })
            .collect();

        let pairs: Vec<(usize, usize)> = member_point_super
            .iter()
            .enumerate()
            .flat_map(|(a, supers)| supers.iter().map(move |&p| (p, a)))
            .collect();

        Ok(ConstellationSet {
            members,
            super_points,
            membership,
            member_point_super,
            pairs,
        })
    }

    pub fn members(&self) -> &[Constellation] {
        &self.members
    }

    /// Number of candidate constellations `|A|`.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn super_points(&self) -> &[Complex64] {
        &self.super_points
    }

    /// Member indices whose constellation contains super point `p`.
    pub fn membership(&self, p: usize) -> &[usize] {
        &self.membership[p]
    }

    /// Super-point index of member `a`'s `j`-th point.
    pub fn member_point(&self, a: usize, j: usize) -> usize {
        self.member_point_super[a][j]
    }

    /// All admissible (super point, member) pairs.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Index of `kind` among the members.
    pub fn index_of(&self, kind: ConstellationKind) -> Option<usize> {
        self.members.iter().position(|m| m.kind() == kind)
    }

    /// Structural invariants: pairwise-distinct super points, non-empty
    /// memberships, and every member point mapped to exactly one super point.
    pub fn validate(&self) -> Result<()> {
        for (i, &p) in self.super_points.iter().enumerate() {
            for &q in &self.super_points[i + 1..] {
                if (p - q).norm() <= COINCIDENCE_TOL {
                    return Err(Error::InvalidConfig(
                        "coincident super points survived deduplication".into(),
                    ));
                }
            }
        }
        if self.membership.iter().any(|s| s.is_empty()) {
            return Err(Error::InvalidConfig("super point with empty membership".into()));
        }
        for (a, m) in self.members.iter().enumerate() {
            for (j, &q) in m.points().iter().enumerate() {
                let hits = self
                    .super_points
                    .iter()
                    .filter(|&&p| (p - q).norm() <= COINCIDENCE_TOL)
                    .count();
                if hits != 1 {
                    return Err(Error::InvalidConfig(format!(
                        "member {a} point {j} matches {hits} super points"
                    )));
                }
            }
        }
        Ok(())
    }
}
