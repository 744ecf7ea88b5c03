//! Plain-text score matrices and match listings.

use super::{RankedGallery, SimilarityMatrix};
use crate::error::{Error, Result};

/// A score matrix with its probe and gallery labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub probe_ids: Vec<String>,
    pub gallery_ids: Vec<String>,
    pub scores: SimilarityMatrix,
}

/// Parses `label,g1,g2,...` followed by `probe,s1,s2,...` rows.
pub fn parse_score_csv(text: &str) -> Result<ScoreTable> {
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::parse("score csv", "missing header row"))?;
    let gallery_ids: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
    let mut probe_ids = Vec::new();
    let mut data = Vec::new();
    for (n, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or_default().trim().to_string();
        let row: Vec<f64> = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(format!("score csv row {}", n + 2), format!("bad number {f:?}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != gallery_ids.len() {
            return Err(Error::parse(
                format!("score csv row {}", n + 2),
                format!("expected {} scores, found {}", gallery_ids.len(), row.len()),
            ));
        }
        probe_ids.push(id);
        data.extend(row);
    }
    let scores = SimilarityMatrix::new(probe_ids.len(), gallery_ids.len(), data)?;
    Ok(ScoreTable {
        probe_ids,
        gallery_ids,
        scores,
    })
}

/// `probe_id,gallery_id,score,selected` for every pair. Each probe lists its
/// selection in rank order first, then the rest by descending score.
pub fn write_match_csv(
    probe_ids: &[String],
    gallery_ids: &[String],
    s: &SimilarityMatrix,
    selections: &[Vec<RankedGallery>],
) -> String {
    let mut out = String::from("probe_id,gallery_id,score,selected\n");
    for (i, sel) in selections.iter().enumerate() {
        let mut chosen = vec![false; s.cols()];
        for g in sel {
            chosen[g.gallery] = true;
            out.push_str(&format!("{},{},{},1\n", probe_ids[i], gallery_ids[g.gallery], g.score));
        }
        let mut rest: Vec<usize> = (0..s.cols()).filter(|&j| !chosen[j]).collect();
        rest.sort_by(|&a, &b| s.get(i, b).total_cmp(&s.get(i, a)).then(a.cmp(&b)));
        for j in rest {
            out.push_str(&format!("{},{},{},0\n", probe_ids[i], gallery_ids[j], s.get(i, j)));
        }
    }
    out
}
