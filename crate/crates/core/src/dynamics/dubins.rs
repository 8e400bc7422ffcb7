//! Shortest forward-only Dubins paths.
//!
//! Closed-form solutions for the six words, evaluated in the normalized frame
//! where the start sits at the origin and the goal on the positive x-axis.

use crate::linalg::wrap_angle;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DubinsWord {
    Lsl,
    Rsr,
    Lsr,
    Rsl,
    Rlr,
    Lrl,
}

/// Fixed order used to break ties between words of equal length.
pub const WORDS: [DubinsWord; 6] = [
    DubinsWord::Lsl,
    DubinsWord::Rsr,
    DubinsWord::Lsr,
    DubinsWord::Rsl,
    DubinsWord::Rlr,
    DubinsWord::Lrl,
];

/// Lengths within this margin are considered tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    Left,
    Straight,
    Right,
}

impl Segment {
    /// Signed curvature multiplier (left turns are counter-clockwise).
    pub fn turn(self) -> f64 {
        match self {
            Segment::Left => 1.0,
            Segment::Straight => 0.0,
            Segment::Right => -1.0,
        }
    }
}

impl DubinsWord {
    pub fn segments(self) -> [Segment; 3] {
        use Segment::*;
        match self {
            DubinsWord::Lsl => [Left, Straight, Left],
            DubinsWord::Rsr => [Right, Straight, Right],
            DubinsWord::Lsr => [Left, Straight, Right],
            DubinsWord::Rsl => [Right, Straight, Left],
            DubinsWord::Rlr => [Right, Left, Right],
            DubinsWord::Lrl => [Left, Right, Left],
        }
    }
}

/// A Dubins path: start configuration, turn radius, word, and the three
/// segment lengths in units of the turn radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DubinsPath {
    pub start: [f64; 3],
    pub rho: f64,
    pub word: DubinsWord,
    pub params: [f64; 3],
}

fn mod2pi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

struct Normalized {
    alpha: f64,
    beta: f64,
    d: f64,
    sa: f64,
    sb: f64,
    ca: f64,
    cb: f64,
    c_ab: f64,
}

fn normalize(q0: [f64; 3], q1: [f64; 3], rho: f64) -> Normalized {
    let dx = q1[0] - q0[0];
    let dy = q1[1] - q0[1];
    let d = dx.hypot(dy) / rho;
    let theta = if d > 0.0 { mod2pi(dy.atan2(dx)) } else { 0.0 };
    let alpha = mod2pi(q0[2] - theta);
    let beta = mod2pi(q1[2] - theta);
    Normalized {
        alpha,
        beta,
        d,
        sa: alpha.sin(),
        sb: beta.sin(),
        ca: alpha.cos(),
        cb: beta.cos(),
        c_ab: (alpha - beta).cos(),
    }
}

fn word_params(n: &Normalized, word: DubinsWord) -> Option<[f64; 3]> {
    let Normalized { alpha, beta, d, sa, sb, ca, cb, c_ab } = *n;
    match word {
        DubinsWord::Lsl => {
            let tmp0 = d + sa - sb;
            let p_sq = 2.0 + d * d - 2.0 * c_ab + 2.0 * d * (sa - sb);
            if p_sq < 0.0 {
                return None;
            }
            let tmp1 = (cb - ca).atan2(tmp0);
            Some([mod2pi(tmp1 - alpha), p_sq.sqrt(), mod2pi(beta - tmp1)])
        }
        DubinsWord::Rsr => {
            let tmp0 = d - sa + sb;
            let p_sq = 2.0 + d * d - 2.0 * c_ab + 2.0 * d * (sb - sa);
            if p_sq < 0.0 {
                return None;
            }
            let tmp1 = (ca - cb).atan2(tmp0);
            Some([mod2pi(alpha - tmp1), p_sq.sqrt(), mod2pi(tmp1 - beta)])
        }
        DubinsWord::Lsr => {
            let p_sq = -2.0 + d * d + 2.0 * c_ab + 2.0 * d * (sa + sb);
            if p_sq < 0.0 {
                return None;
            }
            let p = p_sq.sqrt();
            let tmp0 = (-ca - cb).atan2(d + sa + sb) - (-2.0f64).atan2(p);
            Some([mod2pi(tmp0 - alpha), p, mod2pi(tmp0 - mod2pi(beta))])
        }
        DubinsWord::Rsl => {
            let p_sq = -2.0 + d * d + 2.0 * c_ab - 2.0 * d * (sa + sb);
            if p_sq < 0.0 {
                return None;
            }
            let p = p_sq.sqrt();
            let tmp0 = (ca + cb).atan2(d - sa - sb) - 2.0f64.atan2(p);
            Some([mod2pi(alpha - tmp0), p, mod2pi(beta - tmp0)])
        }
        DubinsWord::Rlr => {
            let tmp0 = (6.0 - d * d + 2.0 * c_ab + 2.0 * d * (sa - sb)) / 8.0;
            if tmp0.abs() > 1.0 {
                return None;
            }
            let phi = (ca - cb).atan2(d - sa + sb);
            let p = mod2pi(2.0 * PI - tmp0.acos());
            let t = mod2pi(alpha - phi + mod2pi(p / 2.0));
            Some([t, p, mod2pi(alpha - beta - t + mod2pi(p))])
        }
        DubinsWord::Lrl => {
            let tmp0 = (6.0 - d * d + 2.0 * c_ab + 2.0 * d * (sb - sa)) / 8.0;
            if tmp0.abs() > 1.0 {
                return None;
            }
            let phi = (ca - cb).atan2(d + sa - sb);
            let p = mod2pi(2.0 * PI - tmp0.acos());
            let t = mod2pi(-alpha - phi + p / 2.0);
            Some([t, p, mod2pi(mod2pi(beta) - alpha - t + mod2pi(p))])
        }
    }
}

/// Path of a single word type, if that word can connect the configurations.
pub fn word_path(q0: [f64; 3], q1: [f64; 3], rho: f64, word: DubinsWord) -> Option<DubinsPath> {
    let n = normalize(q0, q1, rho);
    word_params(&n, word).map(|params| DubinsPath {
        start: q0,
        rho,
        word,
        params,
    })
}

/// Shortest Dubins path; ties within [`TIE_TOLERANCE`] resolve to the
/// earlier word in [`WORDS`].
pub fn shortest_path(q0: [f64; 3], q1: [f64; 3], rho: f64) -> Option<DubinsPath> {
    let n = normalize(q0, q1, rho);
    let mut best: Option<DubinsPath> = None;
    for word in WORDS {
        let Some(params) = word_params(&n, word) else {
            continue;
        };
        let cand = DubinsPath {
            start: q0,
            rho,
            word,
            params,
        };
        match &best {
            Some(b) if cand.length() >= b.length() - TIE_TOLERANCE => {}
            _ => best = Some(cand),
        }
    }
    best
}

impl DubinsPath {
    pub fn length(&self) -> f64 {
        (self.params[0] + self.params[1] + self.params[2]) * self.rho
    }

    /// Signed curvature (1/m) at arc length `s`.
    pub fn curvature_at(&self, s: f64) -> f64 {
        let segs = self.word.segments();
        let mut acc = 0.0;
        for (i, seg) in segs.iter().enumerate() {
            acc += self.params[i] * self.rho;
            if s < acc || i == 2 {
                return seg.turn() / self.rho;
            }
        }
        unreachable!()
    }

    /// Configuration after travelling arc length `s` along the path.
    pub fn sample(&self, s: f64) -> [f64; 3] {
        let segs = self.word.segments();
        let mut q = self.start;
        let mut remaining = s.clamp(0.0, self.length());
        for (i, seg) in segs.iter().enumerate() {
            let seg_len = self.params[i] * self.rho;
            let run = remaining.min(seg_len);
            q = advance(q, *seg, run, self.rho);
            remaining -= run;
            if remaining <= 0.0 {
                break;
            }
        }
        q
    }

    pub fn endpoint(&self) -> [f64; 3] {
        self.sample(self.length())
    }
}

fn advance(q: [f64; 3], seg: Segment, len: f64, rho: f64) -> [f64; 3] {
    let [x, y, th] = q;
    match seg {
        Segment::Straight => [x + len * th.cos(), y + len * th.sin(), th],
        Segment::Left => {
            let phi = len / rho;
            [
                x + rho * ((th + phi).sin() - th.sin()),
                y + rho * (th.cos() - (th + phi).cos()),
                wrap_angle(th + phi),
            ]
        }
        Segment::Right => {
            let phi = len / rho;
            [
                x + rho * (th.sin() - (th - phi).sin()),
                y + rho * ((th - phi).cos() - th.cos()),
                wrap_angle(th - phi),
            ]
        }
    }
}
