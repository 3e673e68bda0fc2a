use crate::error::{Error, Result};
use crate::netcore::Tensor;

/// Pairwise Euclidean distances between head prediction vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityMatrix {
    pub d: Tensor,
}

impl DiversityMatrix {
    pub fn k(&self) -> usize {
        self.d.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d.get2(i, j)
    }

    /// Mean over unordered pairs `i < j`.
    pub fn mean_pairwise(&self) -> f64 {
        let k = self.k();
        let mut sum = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                sum += self.get(i, j);
            }
        }
        sum / (k * (k - 1) / 2) as f64
    }

    pub fn to_csv(&self) -> String {
        let k = self.k();
        let mut s = String::from("head_i,head_j,distance\n");
        for i in 0..k {
            for j in 0..k {
                s.push_str(&format!("{i},{j},{}\n", self.get(i, j)));
            }
        }
        s
    }
}

/// `d[i][j] = ||G_i − G_j||₂` for head predictions `K×N`.
pub fn pairwise_diversity(head_preds: &Tensor) -> Result<DiversityMatrix> {
    if head_preds.shape().len() != 2 || head_preds.rows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pairwise diversity needs K >= 2 heads, got shape {:?}",
            head_preds.shape()
        )));
    }
    let k = head_preds.rows();
    let mut d = Tensor::zeros(&[k, k]);
    for i in 0..k {
        for j in i + 1..k {
            let dist = head_preds
                .row(i)
                .iter()
                .zip(head_preds.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d.data_mut()[i * k + j] = dist;
            d.data_mut()[j * k + i] = dist;
        }
    }
    Ok(DiversityMatrix { d })
}
