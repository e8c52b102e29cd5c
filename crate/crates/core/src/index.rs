//! Gallery of packed codes searched by asymmetric lookup tables.
//!
//! A query is never quantized. Its sub-vectors are compared once against
//! every codeword (an `M x K` table of cosines) and each gallery item is then
//! scored by summing `M` table entries picked out by its code.

use std::cmp::Ordering;

use ndarray::{ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::labels::MultiHotLabels;
use crate::numerics::{cosine_sim_matrix, dot, norm};
use crate::quantizer::{code_len_bytes, hard_assign, pack_code, unpack_code, Codebooks, PqCode};

#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    codebooks: Codebooks,
    codes: Vec<PqCode>,
    ids: Vec<usize>,
    labels: Option<MultiHotLabels>,
    /// Unpacked sub-indices, `N_g x M`, row-major.
    assignments: Vec<u32>,
}

impl Index {
    pub fn from_parts(
        codebooks: Codebooks,
        codes: Vec<PqCode>,
        ids: Vec<usize>,
        labels: Option<MultiHotLabels>,
    ) -> Result<Self> {
        if ids.len() != codes.len() {
            return Err(Error::shape(format!("{} ids for {} codes", ids.len(), codes.len())));
        }
        if let Some(l) = &labels {
            if l.len() != codes.len() {
                return Err(Error::Alignment(format!(
                    "{} label rows for {} codes",
                    l.len(),
                    codes.len()
                )));
            }
        }
        let mut seen = ids.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("gallery ids are not unique"));
        }
        let (m, k) = (codebooks.m(), codebooks.k());
        let mut assignments = Vec::with_capacity(codes.len() * m);
        for code in &codes {
            assignments.extend(unpack_code(code, m, k)?.into_iter().map(|i| i as u32));
        }
        Ok(Self {
            codebooks,
            codes,
            ids,
            labels,
            assignments,
        })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codebooks(&self) -> &Codebooks {
        &self.codebooks
    }

    pub fn codes(&self) -> &[PqCode] {
        &self.codes
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn labels(&self) -> Option<&MultiHotLabels> {
        self.labels.as_ref()
    }

    pub fn code_bytes(&self) -> usize {
        code_len_bytes(self.codebooks.m(), self.codebooks.k())
    }

    /// Sub-indices of gallery item at position `pos`.
    pub fn assignment(&self, pos: usize) -> Vec<usize> {
        let m = self.codebooks.m();
        self.assignments[pos * m..(pos + 1) * m]
            .iter()
            .map(|&i| i as usize)
            .collect()
    }
}

/// Encodes every gallery row by nearest-codeword assignment. Ids are row
/// positions.
pub fn build_index(gallery: ArrayView2<f64>, cb: &Codebooks, labels: Option<MultiHotLabels>) -> Result<Index> {
    if gallery.ncols() != cb.dim() && gallery.nrows() > 0 {
        return Err(Error::shape(format!(
            "gallery dim {} vs codebook dim {}",
            gallery.ncols(),
            cb.dim()
        )));
    }
    let codes = gallery
        .axis_iter(Axis(0))
        .map(|row| {
            let row = row.to_vec();
            pack_code(&hard_assign(&row, cb)?, cb.k())
        })
        .collect::<Result<Vec<_>>>()?;
    let ids = (0..codes.len()).collect();
    Index::from_parts(cb.clone(), codes, ids, labels)
}

/// Query-to-codeword cosines, `M x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    m: usize,
    k: usize,
    values: Vec<f64>,
}

impl LookupTable {
    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.values[m * self.k + k]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.values[m * self.k..(m + 1) * self.k]
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Sum of the table entries selected by `indices`, accumulated in book order.
    pub fn score(&self, indices: impl IntoIterator<Item = usize>) -> f64 {
        indices
            .into_iter()
            .enumerate()
            .map(|(m, k)| self.values[m * self.k + k])
            .sum()
    }
}

pub fn make_lookup_table(query: &[f64], cb: &Codebooks) -> Result<LookupTable> {
    if query.len() != cb.dim() {
        return Err(Error::shape(format!(
            "query dim {} vs codebook dim {}",
            query.len(),
            cb.dim()
        )));
    }
    let (m, k, d) = (cb.m(), cb.k(), cb.d());
    let mut values = Vec::with_capacity(m * k);
    for book in 0..m {
        let sub = &query[book * d..(book + 1) * d];
        let sn = norm(sub);
        for kk in 0..k {
            let c = cb.codeword(book, kk);
            let cn = norm(c);
            values.push(if sn == 0.0 || cn == 0.0 {
                0.0
            } else {
                (dot(sub, c) / (sn * cn)).clamp(-1.0, 1.0)
            });
        }
    }
    Ok(LookupTable { m, k, values })
}

/// Top-k results, best first. Equal scores are ordered by ascending id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    entries: Vec<(usize, f64)>,
}

impl RankedList {
    /// Sorts `(id, score)` pairs and keeps the best `k`.
    pub fn from_scores(mut scored: Vec<(usize, f64)>, k: usize) -> Self {
        let cmp = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if k < scored.len() {
            scored.select_nth_unstable_by(k, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        Self { entries: scored }
    }

    /// Wraps entries already in rank order.
    pub fn from_ranked(entries: Vec<(usize, f64)>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Work counters for one ADC query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchStats {
    /// Query/codeword cosines computed for the lookup table (`M*K`).
    pub table_entries: usize,
    /// Table lookups while scoring the gallery (`N_g*M`).
    pub lookups: usize,
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::param("top-k must be at least 1"));
    }
    Ok(())
}

pub fn adc_search_with_stats(query: &[f64], index: &Index, k: usize) -> Result<(RankedList, SearchStats)> {
    check_k(k)?;
    let table = make_lookup_table(query, &index.codebooks)?;
    let m = index.codebooks.m();
    let mut stats = SearchStats {
        table_entries: table.values.len(),
        lookups: 0,
    };
    let scored: Vec<(usize, f64)> = index
        .assignments
        .chunks_exact(m.max(1))
        .take(index.len())
        .zip(&index.ids)
        .map(|(assign, &id)| {
            stats.lookups += m;
            (id, table.score(assign.iter().map(|&i| i as usize)))
        })
        .collect();
    Ok((RankedList::from_scores(scored, k), stats))
}

pub fn adc_search(query: &[f64], index: &Index, k: usize) -> Result<RankedList> {
    Ok(adc_search_with_stats(query, index, k)?.0)
}

/// ADC search for many queries. `threads <= 1` runs sequentially; more
/// threads split the queries into contiguous chunks, results stay in query
/// order either way.
pub fn adc_search_batch(queries: ArrayView2<f64>, index: &Index, k: usize, threads: usize) -> Result<Vec<RankedList>> {
    let rows: Vec<Vec<f64>> = queries.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    if threads <= 1 || rows.len() < 2 {
        return rows.iter().map(|q| adc_search(q, index, k)).collect();
    }
    let chunk = rows.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = rows
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|q| adc_search(q, index, k)).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(rows.len());
        for h in handles {
            out.extend(h.join().expect("search worker panicked")?);
        }
        Ok(out)
    })
}

/// Uncompressed cosine ranking against raw gallery rows.
pub fn exact_search(query: &[f64], gallery: ArrayView2<f64>, k: usize) -> Result<RankedList> {
    check_k(k)?;
    if gallery.nrows() == 0 {
        return Ok(RankedList::default());
    }
    let q = ndarray::Array2::from_shape_vec((1, query.len()), query.to_vec()).expect("one row");
    let sims = cosine_sim_matrix(q.view(), gallery)?;
    let scored = sims.row(0).iter().copied().enumerate().collect();
    Ok(RankedList::from_scores(scored, k))
}

/// Orders two entries the way [`RankedList`] does.
pub fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}
