//! Brute-force reference implementations over plain token lists. Every
//! n-gram count is a linear scan; LCS is memoized recursion.

#![allow(dead_code)]

use std::collections::HashMap;

pub type Gram = Vec<String>;

pub fn grams(t: &[String], n: usize) -> Vec<Gram> {
    if t.len() < n {
        return Vec::new();
    }
    (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
}

pub fn count(list: &[Gram], g: &Gram) -> usize {
    list.iter().filter(|x| *x == g).count()
}

pub fn distinct(list: &[Gram]) -> Vec<Gram> {
    let mut out: Vec<Gram> = Vec::new();
    for g in list {
        if !out.contains(g) {
            out.push(g.clone());
        }
    }
    out
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// (keep F1, delete precision, delete F1, add F1) for one order.
fn sari_order(s: &[String], c: &[String], refs: &[Vec<String>], n: usize) -> (f64, f64, f64, f64) {
    let k = refs.len();
    let sg = grams(s, n);
    let cg = grams(c, n);
    let rg: Vec<Gram> = refs.iter().flat_map(|r| grams(r, n)).collect();
    let sv = |g: &Gram| count(&sg, g) * k;
    let cv = |g: &Gram| count(&cg, g) * k;
    let rv = |g: &Gram| count(&rg, g);

    let mut union = distinct(&sg);
    for g in distinct(&cg).into_iter().chain(distinct(&rg)) {
        if !union.contains(&g) {
            union.push(g);
        }
    }

    let (mut keep_p_sum, mut keep_n) = (0.0, 0);
    let (mut keep_good, mut keep_all) = (0, 0);
    let (mut del_p_sum, mut del_n) = (0.0, 0);
    let (mut del_good, mut del_all) = (0, 0);
    let (mut add_sys, mut add_good, mut add_ref) = (0, 0, 0);
    for g in &union {
        let (s, c, r) = (sv(g), cv(g), rv(g));
        let kept = s.min(c);
        if kept > 0 {
            keep_n += 1;
            keep_p_sum += kept.min(r) as f64 / kept as f64;
        }
        keep_good += kept.min(r);
        keep_all += s.min(r);
        let deleted = s.saturating_sub(c);
        if deleted > 0 {
            del_n += 1;
            del_p_sum += deleted.saturating_sub(r) as f64 / deleted as f64;
        }
        del_good += deleted.saturating_sub(r);
        del_all += s.saturating_sub(r);
        if s == 0 {
            add_sys += usize::from(c > 0);
            add_ref += usize::from(r > 0);
            add_good += usize::from(c > 0 && r > 0);
        }
    }
    let keep_p = if keep_n == 0 {
        1.0
    } else {
        keep_p_sum / keep_n as f64
    };
    let del_p = if del_n == 0 {
        1.0
    } else {
        del_p_sum / del_n as f64
    };
    let keep = f1(keep_p, ratio_or_one(keep_good, keep_all));
    let del_f1 = f1(del_p, ratio_or_one(del_good, del_all));
    let add = f1(
        ratio_or_one(add_good, add_sys),
        ratio_or_one(add_good, add_ref),
    );
    (keep, del_p, del_f1, add)
}

pub fn sari(s: &[String], c: &[String], refs: &[Vec<String>], all_f1: bool) -> f64 {
    let mut total = 0.0;
    for n in 1..=4 {
        let (keep, del_p, del_f1, add) = sari_order(s, c, refs, n);
        total += keep + if all_f1 { del_f1 } else { del_p } + add;
    }
    100.0 * total / 12.0
}

fn clipped(a: &[Gram], b: &[Gram]) -> usize {
    distinct(a)
        .iter()
        .map(|g| count(a, g).min(count(b, g)))
        .sum()
}

fn smoothed(m: usize, total: usize) -> f64 {
    if m > 0 {
        m as f64 / total as f64
    } else {
        1.0 / (total as f64 + 1.0)
    }
}

fn brevity(c: usize, r: usize) -> f64 {
    if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

fn geo(ps: &[f64]) -> f64 {
    ps.iter().product::<f64>().powf(1.0 / ps.len() as f64)
}

pub fn gleu(s: &[String], c: &[String], refs: &[Vec<String>]) -> f64 {
    let single = |r: &[String]| {
        let order = c.len().min(4);
        if order == 0 {
            return 0.0;
        }
        let ps: Vec<f64> = (1..=order)
            .map(|n| {
                let cg = grams(c, n);
                let m_ref = clipped(&cg, &grams(r, n)) as i64;
                let m_src = clipped(&cg, &grams(s, n)) as i64;
                smoothed((m_ref - (m_src - m_ref).max(0)).max(0) as usize, cg.len())
            })
            .collect();
        100.0 * brevity(c.len(), r.len()) * geo(&ps)
    };
    refs.iter().map(|r| single(r)).sum::<f64>() / refs.len() as f64
}

pub fn bleu(c: &[String], refs: &[Vec<String>]) -> f64 {
    let order = c.len().min(4);
    if order == 0 {
        return 0.0;
    }
    let ps: Vec<f64> = (1..=order)
        .map(|n| {
            let cg = grams(c, n);
            let m: usize = distinct(&cg)
                .iter()
                .map(|g| {
                    count(&cg, g).min(refs.iter().map(|r| count(&grams(r, n), g)).max().unwrap())
                })
                .sum();
            smoothed(m, cg.len())
        })
        .collect();
    let mut best = refs[0].len();
    for r in refs {
        let (d, bd) = (r.len().abs_diff(c.len()), best.abs_diff(c.len()));
        if d < bd || (d == bd && r.len() < best) {
            best = r.len();
        }
    }
    (100.0 * brevity(c.len(), best) * geo(&ps)).min(100.0)
}

pub fn lcs(a: &[String], b: &[String]) -> usize {
    fn go(
        a: &[String],
        b: &[String],
        i: usize,
        j: usize,
        memo: &mut HashMap<(usize, usize), usize>,
    ) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

pub fn rouge(p: &[String], r: &[String], use_lcs: bool) -> f64 {
    if p.is_empty() && r.is_empty() {
        return 100.0;
    }
    let overlap = if use_lcs {
        lcs(p, r)
    } else {
        clipped(&grams(p, 1), &grams(r, 1))
    } as f64;
    let prec = if p.is_empty() {
        0.0
    } else {
        overlap / p.len() as f64
    };
    let rec = if r.is_empty() {
        0.0
    } else {
        overlap / r.len() as f64
    };
    100.0 * f1(prec, rec)
}

/// Levenshtein distance by the textbook full matrix.
pub fn levenshtein(a: &[String], b: &[String]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}
