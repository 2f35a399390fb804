//! Per-row annotation bits carried through sweeps and serialized as a
//! `|`-joined list.

use std::fmt;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Flags(u16);

impl Flags {
    pub const NONE: Flags = Flags(0);
    /// A state in the transition sits near a manifold boundary.
    pub const MIXED: Flags = Flags(1);
    /// Selected max-probability transition is at or below the threshold.
    pub const LOW_PROBABILITY: Flags = Flags(1 << 1);
    /// A finite-difference state match had squared overlap < 0.5.
    pub const MATCH: Flags = Flags(1 << 2);
    /// T2 hit the cap.
    pub const CAPPED: Flags = Flags(1 << 3);
    /// Eigensolver failed; numeric columns are empty.
    pub const SOLVER: Flags = Flags(1 << 4);
    /// Eigen-residual above tolerance.
    pub const RESIDUAL: Flags = Flags(1 << 5);
    /// Closed-form gradient evaluated at its removable singularity.
    pub const KINK: Flags = Flags(1 << 6);

    const NAMES: [(Flags, &'static str); 7] = [
        (Flags::MIXED, "mixed"),
        (Flags::LOW_PROBABILITY, "low_p"),
        (Flags::MATCH, "match"),
        (Flags::CAPPED, "capped"),
        (Flags::SOLVER, "solver_error"),
        (Flags::RESIDUAL, "residual"),
        (Flags::KINK, "kink"),
    ];

    pub fn contains(self, other: Flags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: Flags) {
        self.0 |= other.0;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn parse(text: &str) -> Option<Flags> {
        let mut out = Flags::NONE;
        for part in text.split('|').map(str::trim).filter(|p| !p.is_empty()) {
            let (f, _) = Self::NAMES.iter().find(|(_, n)| *n == part)?;
            out.insert(*f);
        }
        Some(out)
    }
}

impl std::ops::BitOr for Flags {
    type Output = Flags;
    fn bitor(self, rhs: Flags) -> Flags {
        Flags(self.0 | rhs.0)
    }
}

impl std::ops::BitOrAssign for Flags {
    fn bitor_assign(&mut self, rhs: Flags) {
        self.0 |= rhs.0;
    }
}

impl fmt::Display for Flags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (flag, name) in Self::NAMES {
            if self.contains(flag) {
                if !first {
                    f.write_str("|")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        Ok(())
    }
}
