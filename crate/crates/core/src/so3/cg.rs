use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One nonzero real coupling coefficient `C(l1 m1, l2 m2 | l m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgEntry {
    pub l1: usize,
    pub m1: i64,
    pub l2: usize,
    pub m2: i64,
    pub l: usize,
    pub m: i64,
    pub value: f64,
}

/// Sparse real-basis coupling coefficients for every `l1 ≤ L1, l2 ≤ L2, l ≤ L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgTable {
    pub l1_max: usize,
    pub l2_max: usize,
    pub l_max: usize,
    pub entries: Vec<CgEntry>,
}

impl CgTable {
    pub fn build(l1_max: usize, l2_max: usize, l_max: usize) -> Self {
        let mut entries = Vec::new();
        for l1 in 0..=l1_max {
            for l2 in 0..=l2_max {
                for l in 0..=l_max {
                    entries.extend(cg_coefficients(l1, l2, l));
                }
            }
        }
        Self {
            l1_max,
            l2_max,
            l_max,
            entries,
        }
    }

    /// Process-wide shared table, read from or written to `EST_CACHE_DIR` when set.
    pub fn shared(l1_max: usize, l2_max: usize, l_max: usize) -> Arc<CgTable> {
        static MEMO: OnceLock<Mutex<HashMap<(usize, usize, usize), Arc<CgTable>>>> = OnceLock::new();
        let memo = MEMO.get_or_init(|| Mutex::new(HashMap::new()));
        let key = (l1_max, l2_max, l_max);
        if let Some(t) = memo.lock().expect("cg memo").get(&key) {
            return Arc::clone(t);
        }
        let dir = std::env::var_os("EST_CACHE_DIR").map(PathBuf::from);
        let table = Arc::new(match dir {
            Some(d) => Self::cached(l1_max, l2_max, l_max, &d).unwrap_or_else(|_| Self::build(l1_max, l2_max, l_max)),
            None => Self::build(l1_max, l2_max, l_max),
        });
        memo.lock().expect("cg memo").insert(key, Arc::clone(&table));
        table
    }

    /// Loads `<dir>/cg-<L1>-<L2>-<L>.json`, building and writing it on a miss.
    pub fn cached(l1_max: usize, l2_max: usize, l_max: usize, dir: &Path) -> Result<Self> {
        let path = dir.join(format!("cg-{l1_max}-{l2_max}-{l_max}.json"));
        if let Ok(bytes) = std::fs::read(&path) {
            if let Ok(t) = serde_json::from_slice::<CgTable>(&bytes) {
                if (t.l1_max, t.l2_max, t.l_max) == (l1_max, l2_max, l_max) {
                    return Ok(t);
                }
            }
        }
        let t = Self::build(l1_max, l2_max, l_max);
        std::fs::create_dir_all(dir)?;
        std::fs::write(&path, serde_json::to_vec(&t)?)?;
        Ok(t)
    }

    pub fn get(&self, l1: usize, m1: i64, l2: usize, m2: i64, l: usize, m: i64) -> f64 {
        self.entries
            .iter()
            .find(|e| (e.l1, e.m1, e.l2, e.m2, e.l, e.m) == (l1, m1, l2, m2, l, m))
            .map_or(0.0, |e| e.value)
    }
}

/// Real-basis coefficients for one degree triple; empty when the triangle rule fails.
pub fn cg_coefficients(l1: usize, l2: usize, l: usize) -> Vec<CgEntry> {
    if l < l1.abs_diff(l2) || l > l1 + l2 {
        return Vec::new();
    }
    let u1 = real_from_complex(l1);
    let u2 = real_from_complex(l2);
    let u = real_from_complex(l);
    let (i1, i2, il) = (l1 as i64, l2 as i64, l as i64);
    let mut raw = Vec::new();
    for m1 in -i1..=i1 {
        for m2 in -i2..=i2 {
            for m in -il..=il {
                let mut acc = C64::ZERO;
                for big1 in -i1..=i1 {
                    let a = u1[idx(l1, m1)][idx(l1, big1)];
                    if a.is_zero() {
                        continue;
                    }
                    for big2 in -i2..=i2 {
                        let b = u2[idx(l2, m2)][idx(l2, big2)];
                        if b.is_zero() {
                            continue;
                        }
                        let big = big1 + big2;
                        if big.abs() > il {
                            continue;
                        }
                        let c = u[idx(l, m)][idx(l, big)].conj();
                        if c.is_zero() {
                            continue;
                        }
                        let cg = complex_cg(l1, big1, l2, big2, l, big);
                        acc = acc + a * b * c * cg;
                    }
                }
                raw.push((m1, m2, m, acc));
            }
        }
    }
    let use_imag = raw.iter().map(|r| r.3.im.abs()).fold(0.0, f64::max)
        > raw.iter().map(|r| r.3.re.abs()).fold(0.0, f64::max);
    raw.into_iter()
        .filter_map(|(m1, m2, m, z)| {
            let v = if use_imag { z.im } else { z.re };
            (v.abs() > 1e-14).then_some(CgEntry {
                l1,
                m1,
                l2,
                m2,
                l,
                m,
                value: v,
            })
        })
        .collect()
}

/// Complex-basis coefficient by the Racah closed form.
pub fn complex_cg(j1: usize, m1: i64, j2: usize, m2: i64, j: usize, m: i64) -> f64 {
    let (j1i, j2i, ji) = (j1 as i64, j2 as i64, j as i64);
    if m1 + m2 != m || m1.abs() > j1i || m2.abs() > j2i || m.abs() > ji {
        return 0.0;
    }
    if ji < (j1i - j2i).abs() || ji > j1i + j2i {
        return 0.0;
    }
    let f = |n: i64| factorial(n);
    let pre = ((2 * ji + 1) as f64 * f(ji + j1i - j2i) * f(ji - j1i + j2i) * f(j1i + j2i - ji)
        / f(j1i + j2i + ji + 1))
        .sqrt();
    let pre2 = (f(ji + m) * f(ji - m) * f(j1i - m1) * f(j1i + m1) * f(j2i - m2) * f(j2i + m2)).sqrt();
    let mut sum = 0.0;
    for k in 0..=(j1i + j2i + ji) {
        let d = [
            k,
            j1i + j2i - ji - k,
            j1i - m1 - k,
            j2i + m2 - k,
            ji - j2i + m1 + k,
            ji - j1i - m2 + k,
        ];
        if d.iter().any(|&x| x < 0) {
            continue;
        }
        let den: f64 = d.iter().map(|&x| f(x)).product();
        sum += if k % 2 == 0 { 1.0 } else { -1.0 } / den;
    }
    pre * pre2 * sum
}

fn factorial(n: i64) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn idx(l: usize, m: i64) -> usize {
    (m + l as i64) as usize
}

/// Rows: real orders `m`; columns: complex orders `M`, both `-l..=l`.
fn real_from_complex(l: usize) -> Vec<Vec<C64>> {
    let n = 2 * l + 1;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut u = vec![vec![C64::ZERO; n]; n];
    let li = l as i64;
    for m in -li..=li {
        let sign = if m.abs() % 2 == 0 { 1.0 } else { -1.0 };
        let r = idx(l, m);
        if m == 0 {
            u[r][idx(l, 0)] = C64::new(1.0, 0.0);
        } else if m > 0 {
            u[r][idx(l, -m)] = C64::new(h, 0.0);
            u[r][idx(l, m)] = C64::new(sign * h, 0.0);
        } else {
            u[r][idx(l, m)] = C64::new(0.0, h);
            u[r][idx(l, -m)] = C64::new(0.0, -sign * h);
        }
    }
    u
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct C64 {
    re: f64,
    im: f64,
}

impl C64 {
    const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

    fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    fn is_zero(self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
}

impl std::ops::Add for C64 {
    type Output = C64;
    fn add(self, o: C64) -> C64 {
        C64::new(self.re + o.re, self.im + o.im)
    }
}

impl std::ops::Mul for C64 {
    type Output = C64;
    fn mul(self, o: C64) -> C64 {
        C64::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

impl std::ops::Mul<f64> for C64 {
    type Output = C64;
    fn mul(self, k: f64) -> C64 {
        C64::new(self.re * k, self.im * k)
    }
}

/// Coefficient of `Y(l0,m0)` in the product `Y(l1,m1) Y(l2,m2)`:
/// `√((2l1+1)(2l2+1) / (4π(2l0+1))) · C(l1 0, l2 0 | l0 0) · C(l1 m1, l2 m2 | l0 m0)`.
pub fn product_weight(l1: usize, l2: usize, l0: usize) -> f64 {
    let pref = (((2 * l1 + 1) * (2 * l2 + 1)) as f64 / (4.0 * std::f64::consts::PI * (2 * l0 + 1) as f64)).sqrt();
    pref * complex_cg(l1, 0, l2, 0, l0, 0)
}
