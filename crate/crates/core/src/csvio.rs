//! CSV outputs of the command-line tool and the rankings reader.

use crate::error::{Error, Result};
use crate::index::RankedList;
use crate::quantizer::UsageHistogram;

pub const RANKINGS_HEADER: [&str; 4] = ["query_id", "rank", "gallery_id", "score"];

fn csv_err(e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte() as usize);
    Error::Corrupt {
        offset,
        detail: e.to_string(),
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("writing to memory cannot fail");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

/// One row per result; ranks start at 1.
pub fn rankings_csv(lists: &[RankedList]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RANKINGS_HEADER).expect("in-memory write");
    for (q, list) in lists.iter().enumerate() {
        for (rank, (id, score)) in list.entries().iter().enumerate() {
            w.write_record([q.to_string(), (rank + 1).to_string(), id.to_string(), score.to_string()])
                .expect("in-memory write");
        }
    }
    finish(w)
}

/// Reads rankings back as gallery ids per query, ordered by rank. Queries
/// absent from the file get an empty ranking.
pub fn parse_rankings_csv(text: &str, n_queries: usize) -> Result<Vec<Vec<usize>>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?;
    if header.iter().collect::<Vec<_>>() != RANKINGS_HEADER {
        return Err(Error::UnsupportedFormat(format!(
            "rankings header must be {}, found {}",
            RANKINGS_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_queries];
    for record in r.records() {
        let record = record.map_err(csv_err)?;
        let offset = record.position().map_or(0, |p| p.byte() as usize);
        let field = |i: usize| -> Result<usize> {
            record[i].trim().parse().map_err(|_| Error::Corrupt {
                offset,
                detail: format!("{} is not a non-negative integer: {:?}", RANKINGS_HEADER[i], &record[i]),
            })
        };
        let (q, rank, g) = (field(0)?, field(1)?, field(2)?);
        if q >= n_queries {
            return Err(Error::Range(format!(
                "query_id {q} but only {n_queries} query label rows"
            )));
        }
        rows[q].push((rank, g));
    }
    Ok(rows
        .into_iter()
        .map(|mut v| {
            v.sort_unstable();
            v.into_iter().map(|(_, g)| g).collect()
        })
        .collect())
}

/// `metric,value` rows.
pub fn report_csv(rows: &[(String, f64)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "value"]).expect("in-memory write");
    for (name, value) in rows {
        w.write_record([name.clone(), value.to_string()])
            .expect("in-memory write");
    }
    finish(w)
}

/// `book,entropy_bits,c0,...,c{K-1}`, one row per codebook.
pub fn usage_csv(h: &UsageHistogram) -> String {
    let k = h.counts.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["book".to_string(), "entropy_bits".to_string()];
    header.extend((0..k).map(|i| format!("c{i}")));
    w.write_record(&header).expect("in-memory write");
    for (book, (counts, entropy)) in h.counts.iter().zip(&h.entropy_per_book).enumerate() {
        let mut row = vec![book.to_string(), entropy.to_string()];
        row.extend(counts.iter().map(u64::to_string));
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}
