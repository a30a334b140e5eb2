use super::vocab::{Vocab, BOS, EOS, IMG_END, IMG_START, PAD};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Layout `[<img>, v₁…v_N, </img>, <bos>, prompt…, answer…, <eos>]`.
///
/// Visual positions hold `PAD` in `tokens`; their embeddings come from the
/// projector. `loss_mask` is true exactly on the answer tokens and the
/// closing `<eos>`; without an answer there is no `<eos>` and no mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultimodalSequence {
    pub n_visual: usize,
    pub tokens: Vec<usize>,
    pub loss_mask: Vec<bool>,
    pub prompt_len: usize,
    pub answer_len: usize,
}

impl MultimodalSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn visual_range(&self) -> std::ops::Range<usize> {
        1..1 + self.n_visual
    }

    pub fn is_visual(&self, pos: usize) -> bool {
        self.visual_range().contains(&pos)
    }

    /// Position of the first answer token (one past the prompt).
    pub fn answer_start(&self) -> usize {
        self.n_visual + 3 + self.prompt_len
    }

    /// Next-token targets: row `t` of the logits predicts `tokens[t + 1]`,
    /// scored only where the target position is in the loss mask.
    pub fn shifted_targets(&self) -> (Vec<usize>, Vec<bool>) {
        let t = self.len();
        let mut targets = vec![PAD; t];
        let mut mask = vec![false; t];
        if t > 1 {
            targets[..t - 1].copy_from_slice(&self.tokens[1..]);
            mask[..t - 1].copy_from_slice(&self.loss_mask[1..]);
        }
        (targets, mask)
    }

    /// Appends generated tokens after the prompt (inference).
    pub fn with_continuation(&self, generated: &[usize]) -> MultimodalSequence {
        let mut s = self.clone();
        s.tokens.extend_from_slice(generated);
        s.loss_mask.extend(std::iter::repeat_n(false, generated.len()));
        s
    }
}

/// Builds the layout from token ids.
pub fn assemble_ids(n_visual: usize, prompt: &[usize], answer: Option<&[usize]>) -> Result<MultimodalSequence> {
    if prompt.is_empty() {
        return Err(Error::usage("prompt must not be empty"));
    }
    let mut tokens = Vec::with_capacity(n_visual + 4 + prompt.len() + answer.map_or(0, <[usize]>::len));
    tokens.push(IMG_START);
    tokens.extend(std::iter::repeat_n(PAD, n_visual));
    tokens.push(IMG_END);
    tokens.push(BOS);
    tokens.extend_from_slice(prompt);
    let mut loss_mask = vec![false; tokens.len()];
    let answer_len = match answer {
        Some(a) => {
            tokens.extend_from_slice(a);
            tokens.push(EOS);
            loss_mask.extend(std::iter::repeat_n(true, a.len() + 1));
            a.len()
        }
        None => 0,
    };
    Ok(MultimodalSequence { n_visual, tokens, loss_mask, prompt_len: prompt.len(), answer_len })
}

/// Tokenizes `prompt` / `answer` and lays them out after the visual tokens.
pub fn assemble(vocab: &Vocab, visual: &Tensor, lm_dim: usize, prompt: &str, answer: Option<&str>) -> Result<MultimodalSequence> {
    if visual.cols() != lm_dim {
        return Err(Error::usage(format!("visual tokens are {} wide, LM expects {lm_dim}", visual.cols())));
    }
    let p = vocab.tokenize(prompt);
    let a = answer.map(|a| vocab.tokenize(a));
    assemble_ids(visual.rows(), &p, a.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_arithmetic() {
        let s = assemble_ids(2, &[10, 11, 12], Some(&[20, 21])).unwrap();
        assert_eq!(s.len(), 2 + 2 + 1 + 3 + 3);
        assert_eq!(s.tokens, vec![IMG_START, PAD, PAD, IMG_END, BOS, 10, 11, 12, 20, 21, EOS]);
        let trues: Vec<usize> = (0..s.len()).filter(|&i| s.loss_mask[i]).collect();
        assert_eq!(trues, vec![8, 9, 10]);
        assert_eq!(s.answer_start(), 8);
        let (tg, m) = s.shifted_targets();
        assert_eq!((tg[7], m[7]), (20, true));
        assert_eq!((tg[9], m[9]), (EOS, true));
        assert!(!m[10]);
    }

    #[test]
    fn inference_and_errors() {
        let s = assemble_ids(3, &[9], None).unwrap();
        assert!(s.loss_mask.iter().all(|&m| !m));
        assert!(assemble_ids(3, &[], None).is_err());
        let v = Vocab::from_corpus(["describe the slide"]);
        let vis = Tensor::zeros(&[2, 4]);
        assert!(assemble(&v, &vis, 8, "describe", None).is_err());
        let a = assemble(&v, &vis, 4, "describe the slide", None).unwrap();
        let b = assemble(&v, &Tensor::filled(&[2, 4], 1.0), 4, "describe the slide", None).unwrap();
        assert_eq!(a.tokens, b.tokens);
    }
}
