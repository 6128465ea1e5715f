//! Counter-based innovations: `eps(u)` is a pure function of
//! `(master_seed, replication, substream, u)`, so any lattice site can be
//! addressed directly and coupled copies share every site but the ones
//! deliberately redrawn.

use serde::{Deserialize, Serialize};

use super::law::InnovationLaw;
use crate::lattice::LatticePoint;

/// Substream of the primary field.
pub const SUBSTREAM_MAIN: u64 = 0;
/// Substream holding the independent copy `eps'_0`.
pub const SUBSTREAM_COUPLING: u64 = 1;
/// First substream used for exterior resampling; inner draw `k` uses
/// `SUBSTREAM_EXTERIOR + k`.
pub const SUBSTREAM_EXTERIOR: u64 = 1 << 32;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one replication of the innovation field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InnovationStream {
    pub master_seed: u64,
    pub replication: u64,
}

impl InnovationStream {
    pub fn new(master_seed: u64, replication: u64) -> Self {
        Self { master_seed, replication }
    }

    #[inline]
    fn site_key(&self, substream: u64, coords: &[i64]) -> u64 {
        let mut h = mix(self.master_seed);
        h = mix(h ^ self.replication.wrapping_mul(0xD1B5_4A32_D192_ED03));
        h = mix(h ^ substream.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7));
        for &c in coords {
            h = mix(h ^ (c as u64));
        }
        h
    }

    /// Two independent 64-bit words attached to site `u` of `substream`.
    #[inline]
    pub fn words(&self, substream: u64, u: &LatticePoint) -> (u64, u64) {
        let k = self.site_key(substream, u.coords());
        (mix(k ^ 0x5555_5555_5555_5555), mix(k ^ 0xAAAA_AAAA_AAAA_AAAA))
    }

    #[inline]
    pub fn eps(&self, law: &InnovationLaw, substream: u64, u: &LatticePoint) -> f64 {
        let (a, b) = self.words(substream, u);
        law.sample(a, b)
    }
}

/// Anything that assigns an innovation to each lattice site.
pub trait InnovationSource {
    fn eps(&self, u: &LatticePoint) -> f64;
}

/// The primary innovation field of one replication.
#[derive(Clone, Copy, Debug)]
pub struct StreamSource {
    pub stream: InnovationStream,
    pub law: InnovationLaw,
    pub substream: u64,
}

impl StreamSource {
    pub fn main(stream: InnovationStream, law: InnovationLaw) -> Self {
        Self { stream, law, substream: SUBSTREAM_MAIN }
    }
}

impl InnovationSource for StreamSource {
    #[inline]
    fn eps(&self, u: &LatticePoint) -> f64 {
        self.stream.eps(&self.law, self.substream, u)
    }
}

/// `eps*`: identical to the base field except at the origin.
pub struct CoupledSource<'a, S: InnovationSource> {
    pub base: &'a S,
    pub origin_value: f64,
}

impl<S: InnovationSource> InnovationSource for CoupledSource<'_, S> {
    #[inline]
    fn eps(&self, u: &LatticePoint) -> f64 {
        if u.coords().iter().all(|&c| c == 0) {
            self.origin_value
        } else {
            self.base.eps(u)
        }
    }
}

/// Keeps the base innovations within sup-distance `radius` of `center` and
/// takes fresh ones outside.
pub struct ExteriorResampled<'a, S: InnovationSource, F: InnovationSource> {
    pub base: &'a S,
    pub fresh: F,
    pub center: &'a LatticePoint,
    pub radius: u64,
}

impl<S: InnovationSource, F: InnovationSource> InnovationSource for ExteriorResampled<'_, S, F> {
    #[inline]
    fn eps(&self, u: &LatticePoint) -> f64 {
        let inside = u
            .coords()
            .iter()
            .zip(self.center.coords())
            .all(|(a, c)| (a - c).unsigned_abs() <= self.radius);
        if inside {
            self.base.eps(u)
        } else {
            self.fresh.eps(u)
        }
    }
}

/// Innovations cached on a box; sites outside the box fall through to the
/// backing source.
pub struct DenseInnovations<S: InnovationSource> {
    lo: Vec<i64>,
    extent: Vec<usize>,
    values: Vec<f64>,
    backing: S,
}

impl<S: InnovationSource> DenseInnovations<S> {
    pub fn fill(lo: &[i64], hi: &[i64], backing: S) -> Self {
        let extent: Vec<usize> = lo.iter().zip(hi).map(|(l, h)| (h - l + 1).max(0) as usize).collect();
        let total: usize = extent.iter().product();
        let mut values = Vec::with_capacity(total);
        crate::lattice::for_each_box(lo, hi, |c| {
            values.push(backing.eps(&LatticePoint::new(c).expect("nonempty coords")));
        });
        Self { lo: lo.to_vec(), extent, values, backing }
    }

    #[inline]
    fn index(&self, u: &LatticePoint) -> Option<usize> {
        let mut idx = 0usize;
        for ((c, l), e) in u.coords().iter().zip(&self.lo).zip(&self.extent) {
            let off = c - l;
            if off < 0 || off as usize >= *e {
                return None;
            }
            idx = idx * e + off as usize;
        }
        Some(idx)
    }
}

impl<S: InnovationSource> InnovationSource for DenseInnovations<S> {
    #[inline]
    fn eps(&self, u: &LatticePoint) -> f64 {
        match self.index(u) {
            Some(i) => self.values[i],
            None => self.backing.eps(u),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[i64]) -> LatticePoint {
        LatticePoint::new(c).unwrap()
    }

    #[test]
    fn eps_is_pure() {
        let s = InnovationStream::new(7, 3);
        let law = InnovationLaw::StandardNormal;
        let u = pt(&[4, -2]);
        assert_eq!(s.eps(&law, 0, &u).to_bits(), s.eps(&law, 0, &u).to_bits());
        assert_ne!(s.eps(&law, 0, &u), s.eps(&law, 1, &u));
        assert_ne!(s.eps(&law, 0, &u), InnovationStream::new(7, 4).eps(&law, 0, &u));
    }

    #[test]
    fn replications_uncorrelated_and_unit_variance() {
        let law = InnovationLaw::StandardNormal;
        let u = pt(&[0, 0]);
        let n = 40_000;
        let (mut sxy, mut sxx, mut sx) = (0.0, 0.0, 0.0);
        for r in 0..n {
            let x = InnovationStream::new(11, 2 * r).eps(&law, 0, &u);
            let y = InnovationStream::new(11, 2 * r + 1).eps(&law, 0, &u);
            sxy += x * y;
            sxx += x * x;
            sx += x;
        }
        let n = n as f64;
        assert!((sx / n).abs() < 4.0 / n.sqrt());
        assert!((sxx / n - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
        assert!((sxy / n).abs() < 4.0 / n.sqrt());
    }

    #[test]
    fn neighbouring_sites_uncorrelated() {
        let law = InnovationLaw::UniformCentered;
        let s = InnovationStream::new(5, 0);
        let n = 20_000i64;
        let acc: f64 = (0..n).map(|k| s.eps(&law, 0, &pt(&[k])) * s.eps(&law, 0, &pt(&[k + 1]))).sum();
        assert!((acc / n as f64).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn dense_cache_agrees_with_stream() {
        let src = StreamSource::main(InnovationStream::new(1, 2), InnovationLaw::Rademacher);
        let dense = DenseInnovations::fill(&[-2, -1], &[3, 4], src);
        for c in [[-2, -1], [0, 0], [3, 4], [10, 10], [-3, 0]] {
            let u = pt(&c);
            assert_eq!(dense.eps(&u), src.eps(&u));
        }
    }

    #[test]
    fn coupled_source_changes_only_origin() {
        let src = StreamSource::main(InnovationStream::new(1, 2), InnovationLaw::StandardNormal);
        let c = CoupledSource { base: &src, origin_value: 42.0 };
        assert_eq!(c.eps(&pt(&[0, 0])), 42.0);
        assert_eq!(c.eps(&pt(&[0, 1])), src.eps(&pt(&[0, 1])));
    }
}
