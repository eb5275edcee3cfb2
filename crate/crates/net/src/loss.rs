use candle_core::Tensor;
use fragvqa_core::metrics::PLCC_LOSS_EPS;

use crate::{Error, Result};

/// Differentiable `(1 - PLCC(pred, gt)) / 2` over a 1-D batch, with the
/// same variance stabilizer as the host-side metric.
pub fn plcc_loss(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    let n = pred.elem_count();
    if pred.dims() != [n] || gt.dims() != [n] || n < 2 {
        return Err(Error::Contract(format!(
            "plcc loss needs two equal 1-D batches of at least 2, got {:?} and {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let gt = gt.to_dtype(pred.dtype())?;
    let dp = pred.broadcast_sub(&pred.mean_keepdim(0)?)?;
    let dg = gt.broadcast_sub(&gt.mean_keepdim(0)?)?;
    let cov = (&dp * &dg)?.mean(0)?;
    let sp = (dp.sqr()?.mean(0)? + PLCC_LOSS_EPS)?.sqrt()?;
    let sg = (dg.sqr()?.mean(0)? + PLCC_LOSS_EPS)?.sqrt()?;
    let r = (cov / (sp * sg)?)?;
    Ok(r.affine(-0.5, 0.5)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};

    #[test]
    fn matches_host_loss_and_gradient() {
        let p = [0.3, -1.2, 2.0, 0.7, 0.1];
        let g = [1.0, 2.5, 4.0, 3.0, 1.5];
        let (want, want_grad) = fragvqa_core::metrics::plcc_loss_with_grad(&p, &g).unwrap();
        let var = Var::new(&p, &Device::Cpu).unwrap();
        let gt = Tensor::new(&g, &Device::Cpu).unwrap();
        let l = plcc_loss(var.as_tensor(), &gt).unwrap();
        assert!((l.to_scalar::<f64>().unwrap() - want).abs() < 1e-14);
        let grads = l.backward().unwrap();
        let got: Vec<f64> = grads.get(var.as_tensor()).unwrap().to_vec1().unwrap();
        for (a, b) in got.iter().zip(&want_grad) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }
}
