//! Independent reference computations for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64 as C;

/// Per-photon output amplitudes (e, f, g) for inputs a and b, from an
/// explicit product of element matrices. Modes: 0,1 carry the two paths,
/// 2..6 are the separate loss reservoirs of c, d, e, f, which are summed
/// into g at the end.
pub fn matrix_rows(phi: f64, eta: [f64; 4]) -> [[C; 3]; 2] {
    type M = [[C; 6]; 6];
    let zero = C::new(0.0, 0.0);
    let one = C::new(1.0, 0.0);
    let identity = || {
        let mut m = [[zero; 6]; 6];
        for (k, row) in m.iter_mut().enumerate() {
            row[k] = one;
        }
        m
    };
    let bs = || {
        let mut m = identity();
        let r = C::new(FRAC_1_SQRT_2, 0.0);
        let t = C::new(0.0, FRAC_1_SQRT_2);
        m[0][0] = r;
        m[0][1] = t;
        m[1][0] = t;
        m[1][1] = r;
        m
    };
    let phase = || {
        let mut m = identity();
        m[1][1] = C::from_polar(1.0, phi);
        m
    };
    // Path mode `p` loses amplitude into reservoir `res` (initially empty).
    let loss = |p: usize, res: usize, e: f64| {
        let mut m = identity();
        m[p][p] = C::new(e, 0.0);
        m[res][p] = C::new(1.0 - e, 0.0);
        m
    };
    let apply = |m: &M, v: &[C; 6]| {
        let mut out = [zero; 6];
        for i in 0..6 {
            for j in 0..6 {
                out[i] += m[i][j] * v[j];
            }
        }
        out
    };
    let chain: Vec<M> =
        vec![bs(), phase(), loss(0, 2, eta[0]), loss(1, 3, eta[1]), bs(), loss(0, 4, eta[2]), loss(1, 5, eta[3])];
    let run = |start: usize| {
        let mut v = [zero; 6];
        v[start] = one;
        for m in &chain {
            v = apply(m, &v);
        }
        [v[0], v[1], v[2] + v[3] + v[4] + v[5]]
    };
    [run(0), run(1)]
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Output state key: (output mode 0..3, class) -> count.
pub type OutKey = BTreeMap<(usize, u8), u32>;

/// Amplitudes obtained by assigning every photon to an output mode
/// individually and summing the products of single-photon amplitudes.
/// `input` lists (input mode 0 = a / 1 = b, class, count).
pub fn brute_force_amplitudes(input: &[(usize, u8, u32)], rows: &[[C; 3]; 2]) -> BTreeMap<OutKey, C> {
    let photons: Vec<(usize, u8)> =
        input.iter().flat_map(|&(m, c, n)| std::iter::repeat_n((m, c), n as usize)).collect();
    let norm: f64 = input.iter().map(|&(_, _, n)| 1.0 / factorial(n).sqrt()).product();
    let n = photons.len();
    let mut out: BTreeMap<OutKey, C> = BTreeMap::new();
    for code in 0..3usize.pow(n as u32) {
        let mut key = OutKey::new();
        let mut amp = C::new(1.0, 0.0);
        let mut c = code;
        for &(mode, class) in &photons {
            let o = c % 3;
            c /= 3;
            amp *= rows[mode][o];
            *key.entry((o, class)).or_insert(0) += 1;
        }
        *out.entry(key).or_insert(C::new(0.0, 0.0)) += amp;
    }
    out.into_iter()
        .map(|(k, a)| {
            let bose: f64 = k.values().map(|&m| factorial(m).sqrt()).product();
            (k, a * norm * bose)
        })
        .collect()
}

pub fn mode_totals(key: &OutKey) -> (u32, u32) {
    let e = key.iter().filter(|((o, _), _)| *o == 0).map(|(_, n)| n).sum();
    let f = key.iter().filter(|((o, _), _)| *o == 1).map(|(_, n)| n).sum();
    (e, f)
}

pub fn brute_force_probability(
    input: &[(usize, u8, u32)],
    rows: &[[C; 3]; 2],
    accept: impl Fn(u32, u32) -> bool,
) -> f64 {
    brute_force_amplitudes(input, rows)
        .iter()
        .filter(|(k, _)| {
            let (e, f) = mode_totals(k);
            accept(e, f)
        })
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

/// The printed P_{3,1} for |2_a 1_a' 2_b⟩ in terms of A–F (without the
/// per-photon 1/√2).
pub fn p31_closed_form(a: C, b: C, c: C, d: C, e: C, f: C) -> f64 {
    let pre = (1.0 / (8.0 * 2f64.sqrt())).powi(2);
    let t1 = 24.0 * (a * a * b * d * d).norm_sqr();
    let t2 = 4.0 * (a * (a * a * e * e + b * b * d * d + 4.0 * a * b * d * e)).norm_sqr();
    let k = 2.0 * a * a * d * e + 2.0 * a * b * d * d;
    let t3 = 6.0 * (a * k).norm_sqr();
    let t4 = 6.0 * (b * k).norm_sqr();
    let t5 = 6.0 * (c * k).norm_sqr();
    let t6 = 6.0 * (b * (2.0 * a * a * d * f + 2.0 * a * c * d * d)).norm_sqr();
    let t7 =
        2.0 * (a * (2.0 * a * a * e * f + 4.0 * a * b * d * f + 4.0 * a * c * d * e + 2.0 * b * c * d * d)).norm_sqr();
    pre * (t1 + t2 + t3 + t4 + t5 + t6 + t7)
}

/// Small deterministic generator for test parameters (SplitMix64).
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed)
    }

    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
