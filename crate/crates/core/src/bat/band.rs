//! Width-`R` band of lattice cells around a CIF alignment.

use crate::error::{Error, Result};

/// Per-frame inclusive `u`-intervals (0-based frames).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneBand {
    pub width: usize,
    pub ranges: Vec<(usize, usize)>,
}

impl PruneBand {
    /// Every cell of a `T × (U+1)` lattice.
    pub fn full(t_len: usize, u_len: usize) -> Self {
        Self {
            width: u_len + 1,
            ranges: vec![(0, u_len); t_len],
        }
    }

    pub fn num_cells(&self) -> usize {
        self.ranges.iter().map(|&(lo, hi)| hi - lo + 1).sum()
    }

    /// `lo_t` non-decreasing, start and terminal cells included, and each frame's
    /// interval overlapping the next so a monotone path exists.
    pub fn check(&self, t_len: usize, u_len: usize) -> Result<()> {
        if self.ranges.len() != t_len || t_len == 0 {
            return Err(Error::Invalid(format!("band has {} frames, lattice {t_len}", self.ranges.len())));
        }
        for (t, &(lo, hi)) in self.ranges.iter().enumerate() {
            if lo > hi || hi > u_len || hi - lo + 1 > self.width {
                return Err(Error::Invalid(format!("bad interval [{lo}, {hi}] at frame {}", t + 1)));
            }
            if t > 0 {
                let (plo, phi) = self.ranges[t - 1];
                if lo < plo || lo > phi {
                    return Err(Error::BandDisconnected { r: self.width, t: t + 1, u: u_len });
                }
            }
        }
        if self.ranges[0].0 != 0 || self.ranges[t_len - 1].1 != u_len {
            return Err(Error::BandDisconnected { r: self.width, t: t_len, u: u_len });
        }
        Ok(())
    }
}

/// Centers frame `t` on `u*(t) = #{u : b_u ≤ t}`, then clamps each lower edge
/// into the range from which both `(1,0)` and `(T,U)` stay reachable and makes
/// the edges non-decreasing with steps of at most `R − 1`.
pub fn build_band(boundaries: &[usize], t_len: usize, u_len: usize, r: usize) -> Result<PruneBand> {
    if r < 2 {
        return Err(Error::BandTooNarrow(r));
    }
    if boundaries.len() != u_len {
        return Err(Error::Invalid(format!("{} boundaries for {u_len} labels", boundaries.len())));
    }
    if t_len == 0 {
        return Err(Error::TooShort("band needs at least one frame".into()));
    }
    if u_len > t_len * (r - 1) {
        return Err(Error::BandDisconnected { r, t: t_len, u: u_len });
    }
    let step = r - 1;
    let top = (u_len + 1).saturating_sub(r);
    let half = (r - 1) / 2;
    let mut lo = Vec::with_capacity(t_len);
    for t in 1..=t_len {
        let center = boundaries.iter().filter(|&&b| b <= t).count();
        let lower = top.saturating_sub((t_len - t) * step);
        let upper = ((t - 1) * step).min(top);
        lo.push(center.saturating_sub(half).clamp(lower, upper));
    }
    for t in 1..t_len {
        lo[t] = lo[t].max(lo[t - 1]).min(lo[t - 1] + step);
    }
    let band = PruneBand {
        width: r,
        ranges: lo.into_iter().map(|l| (l, (l + step).min(u_len))).collect(),
    };
    band.check(t_len, u_len)?;
    Ok(band)
}

/// The band centers `u*(t)` before widening.
pub fn band_centers(boundaries: &[usize], t_len: usize) -> Vec<usize> {
    (1..=t_len)
        .map(|t| boundaries.iter().filter(|&&b| b <= t).count())
        .collect()
}
