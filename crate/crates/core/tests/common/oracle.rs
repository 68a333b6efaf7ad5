//! Reference fixed-point iteration on a dense matrix, written straight from
//! the update rules and sharing no code with the library.

/// `ratings[u][i]` is the raw rating or 0 when user `u` did not rate item `i`.
pub struct Dense {
    pub ratings: Vec<Vec<u8>>,
    pub scale: f64,
}

pub struct Fixed {
    pub rankings: Vec<Option<f64>>,
    pub reputations: Vec<f64>,
}

impl Dense {
    pub fn from_triples(triples: &[(u32, u32, i64)]) -> Self {
        // ids are assumed to be 1..=n without gaps
        let users = triples.iter().map(|t| t.0).max().unwrap_or(0) as usize;
        let items = triples.iter().map(|t| t.1).max().unwrap_or(0) as usize;
        let mut ratings = vec![vec![0u8; items]; users];
        for &(u, i, r) in triples {
            ratings[u as usize - 1][i as usize - 1] = r as u8;
        }
        Self {
            ratings,
            scale: 5.0,
        }
    }

    fn value(&self, u: usize, i: usize) -> Option<f64> {
        match self.ratings[u][i] {
            0 => None,
            r => Some(r as f64 / self.scale),
        }
    }

    /// `normalized == false` divides by the number of raters, `true` by
    /// the summed reputation of the raters.
    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, lambda: f64, normalized: bool, tol: f64) -> Fixed {
        let users = self.ratings.len();
        let items = self.ratings.first().map_or(0, Vec::len);
        let mut c = vec![1.0; users];
        let mut r = vec![None; items];
        for _ in 0..100_000 {
            for (i, slot) in r.iter_mut().enumerate() {
                let raters: Vec<(f64, f64)> = (0..users)
                    .filter_map(|u| self.value(u, i).map(|v| (v, c[u])))
                    .collect();
                if raters.is_empty() {
                    continue;
                }
                let num: f64 = raters.iter().map(|(v, w)| v * w).sum();
                let den: f64 = if normalized {
                    raters.iter().map(|(_, w)| w).sum()
                } else {
                    raters.len() as f64
                };
                *slot = Some(num / den);
            }
            let mut change: f64 = 0.0;
            for u in 0..users {
                let rated: Vec<f64> = (0..items)
                    .filter_map(|i| self.value(u, i).map(|v| (v - r[i].unwrap()).abs()))
                    .collect();
                if rated.is_empty() {
                    continue;
                }
                let next = 1.0 - lambda * rated.iter().sum::<f64>() / rated.len() as f64;
                change = change.max((next - c[u]).abs());
                c[u] = next;
            }
            if change < tol {
                break;
            }
        }
        Fixed {
            rankings: r,
            reputations: c,
        }
    }
}
