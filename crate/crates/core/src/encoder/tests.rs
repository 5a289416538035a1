use super::*;
use crate::corpus::TagSet;

fn sentence(id: &str, words: &[&str]) -> LabeledSentence {
    LabeledSentence::from_strs(id, words, &vec!["O"; words.len()]).unwrap()
}

fn tiny_model(max_len: usize, truncate: bool) -> TaggerModel {
    let cfg = EncoderConfig {
        hidden_size: 16,
        heads: 2,
        intermediate_size: 24,
        max_len,
        truncate,
        seed: 3,
        ..EncoderConfig::default()
    };
    let train = vec![sentence("a", &["he", "kicked", "the", "bucket"]), sentence("b", &["a", "red", "bucket"])];
    TaggerModel::tiny(cfg, TagSet::from_classes(["idiom"]), &train).unwrap()
}

#[test]
fn config_validation() {
    assert!(EncoderConfig::default().validate().is_ok());
    let bad_heads = EncoderConfig { heads: 3, ..EncoderConfig::default() };
    assert!(matches!(bad_heads.validate(), Err(Error::Config(_))));
    let small = EncoderConfig { hidden_size: 4, heads: 1, ..EncoderConfig::default() };
    assert!(small.validate().is_err());
    assert_eq!("tiny-from-scratch".parse::<EncoderMode>().unwrap(), EncoderMode::TinyFromScratch);
    assert!("huge".parse::<EncoderMode>().is_err());
}

#[test]
fn classify_by_hand() {
    let head = ClassifierHead::new(
        Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap(),
        vec![0.0, 0.0, 0.5],
    )
    .unwrap();
    let enc = EncodedSentence {
        cls: vec![0.0, 0.0],
        word_vectors: vec![vec![2.0, 0.0], vec![0.0, 0.0], vec![0.5, 0.5]],
    };
    let p = classify_tokens(&enc, &head).unwrap();
    let z = 2f64.exp() + 1.0 + 0.5f64.exp();
    assert!((p.probs[0][0] - 2f64.exp() / z).abs() < 1e-12);
    assert_eq!(p.argmax, vec![0, 2, 0]);
    // exact tie between labels 0, 1 and 2 goes to the lowest index
    assert_eq!(argmax(&[0.5, 0.5, 0.5]), 0);
    for row in &p.probs {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn classify_rejects_dimension_mismatch() {
    let head = ClassifierHead::new(Matrix::zeros(3, 2), vec![0.0; 3]).unwrap();
    let enc = EncodedSentence { cls: vec![0.0; 3], word_vectors: vec![vec![0.0; 3]] };
    assert!(matches!(classify_tokens(&enc, &head), Err(Error::Shape(_))));
    assert!(ClassifierHead::new(Matrix::zeros(3, 2), vec![0.0; 2]).is_err());
}

#[test]
fn decode_repairs_stray_inside() {
    let tags = TagSet::from_classes(["idiom"]);
    let b = tags.index_of(&"B-idiom".parse().unwrap()).unwrap();
    let i = tags.index_of(&"I-idiom".parse().unwrap()).unwrap();
    let preds = TokenPredictions { probs: vec![], argmax: vec![0, i, i, 0, b] };
    let out: Vec<String> = decode_labels(&preds, &tags).iter().map(|t| t.to_string()).collect();
    assert_eq!(out, ["O", "B-idiom", "I-idiom", "O", "B-idiom"]);
}

#[test]
fn graph_logits_match_value_path() {
    let m = tiny_model(32, true);
    let s = sentence("x", &["he", "kicked", "the", "unseenword"]);
    let prepared = m.prepare(&s).unwrap();
    let mut g = Graph::new();
    let bound = m.params.bind(&mut g);
    let nodes = m.forward(&mut g, &bound, &prepared);
    let graph_probs = autodiff::softmax_rows(g.value(nodes.logits)).to_rows();
    let value = classify_tokens(&m.encode(&s).unwrap(), &m.head()).unwrap();
    for (a, b) in graph_probs.iter().flatten().zip(value.probs.iter().flatten()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(m.encode(&s).unwrap().word_count(), 4);
    assert_eq!(m.encode(&s).unwrap().dim(), 16);
}

#[test]
fn word_rows_skip_continuations() {
    let m = tiny_model(32, true);
    // "unseenword" falls back to four hashed pieces
    let p = m.prepare(&sentence("x", &["unseenword", "the"])).unwrap();
    assert_eq!(p.ids.len(), 2 + 4 + 1);
    assert_eq!(p.word_rows, vec![1, 5]);
    assert_eq!(p.alignment.mask, vec![true, false, false, false, true]);
    assert_eq!(p.ids[0], m.tokenizer.cls_id());
    assert_eq!(*p.ids.last().unwrap(), m.tokenizer.sep_id());
}

#[test]
fn truncation_drops_continuations_then_words() {
    let m = tiny_model(6, true);
    // 4 + 1 pieces fit after dropping continuations of the first word
    let p = m.prepare(&sentence("x", &["unseenword", "the"])).unwrap();
    assert!(p.ids.len() <= 6);
    assert_eq!(p.supervised, vec![true, true]);
    let long = sentence("y", &["the", "the", "the", "the", "the", "the"]);
    let p = m.prepare(&long).unwrap();
    assert_eq!(p.ids.len(), 6);
    assert_eq!(p.supervised, vec![true, true, true, true, false, false]);
    assert_eq!(p.word_rows[4], 5);
    assert_eq!(m.encode(&long).unwrap().word_count(), 6);

    let strict = tiny_model(6, false);
    assert!(matches!(strict.prepare(&long), Err(Error::SequenceTooLong { len: 8, max: 6 })));
}

#[test]
fn backward_matches_finite_differences() {
    let m = tiny_model(16, true);
    let s = sentence("x", &["he", "kicked", "bucket"]);
    let prepared = m.prepare(&s).unwrap();
    let loss_of = |params: &ParamStore| {
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let nodes = m.forward(&mut g, &bound, &prepared);
        let w = Matrix::from_vec(3, 3, (0..9).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let w = g.constant(w);
        let probs = g.softmax_rows(nodes.logits);
        let mixed = g.matmul_bt(probs, w);
        let total = g.span_means(&[(mixed, 0, 3)]);
        let ones = g.constant(Matrix::from_vec(3, 1, vec![1.0, -2.0, 0.5]).unwrap());
        let out = g.matmul(total, ones);
        (g, out)
    };
    let (g, out) = loss_of(&m.params);
    let grads = g.backward(out, m.params.len());
    for name in ["layer.0.query.weight", "embeddings.word", "layer.1.ff_in.weight", "head.bias"] {
        let slot = m.params.slot(name).unwrap();
        let analytic = grads.get(slot).unwrap();
        for idx in [0usize, analytic.data.len() - 1] {
            let h = 1e-5;
            let mut plus = m.params.clone();
            plus.get_mut(name).unwrap().data[idx] += h;
            let mut minus = m.params.clone();
            minus.get_mut(name).unwrap().data[idx] -= h;
            let (gp, op) = loss_of(&plus);
            let (gm, om) = loss_of(&minus);
            let numeric = (gp.value(op).data[0] - gm.value(om).data[0]) / (2.0 * h);
            let a = analytic.data[idx];
            assert!((a - numeric).abs() < 1e-6 * (1.0 + numeric.abs()), "{name}[{idx}]: {a} vs {numeric}");
        }
    }
}

#[test]
fn checkpoint_round_trip() {
    let m = tiny_model(32, true);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    m.save(&path).unwrap();
    let back = TaggerModel::load(&path).unwrap();
    assert_eq!(back, m);
    let s = sentence("x", &["the", "red", "zebra"]);
    assert_eq!(back.encode(&s).unwrap(), m.encode(&s).unwrap());

    let text = std::fs::read_to_string(&path).unwrap().replace("\"version\":1", "\"version\":99");
    std::fs::write(&path, text).unwrap();
    assert!(matches!(TaggerModel::load(&path), Err(Error::Checkpoint(_))));
}

#[test]
fn bert_layout_round_trip() {
    let m = tiny_model(32, true);
    let Tokenizer::Hashed(_) = &m.tokenizer else { unreachable!() };
    // name every embedding row so known words map to the same ids
    let mut vocab: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"].iter().map(|s| s.to_string()).collect();
    let known = ["bucket", "a", "he", "kicked", "red", "the"];
    vocab.extend(known.iter().map(|s| s.to_string()));
    while vocab.len() < m.tokenizer.vocab_size() {
        vocab.push(format!("[unused{}]", vocab.len()));
    }
    for w in known {
        assert_eq!(m.tokenizer.pieces(w), vec![vocab.iter().position(|v| v == w).unwrap()]);
    }
    let dir = tempfile::tempdir().unwrap();
    export_bert_checkpoint(&m, &vocab, dir.path()).unwrap();

    let cfg = EncoderConfig {
        mode: EncoderMode::PretrainedTransformer,
        pretrained_dir: Some(dir.path().to_path_buf()),
        max_len: 128,
        ..EncoderConfig::default()
    };
    let loaded = TaggerModel::build(cfg, m.tags.clone(), &[]).unwrap();
    assert_eq!(loaded.config.hidden_size, 16);
    assert_eq!(loaded.config.heads, 2);
    assert_eq!(loaded.config.max_len, 32);
    let s = sentence("x", &["He", "kicked", "the", "bucket"]);
    let a = m.encode(&s).unwrap();
    let b = loaded.encode(&s).unwrap();
    for (x, y) in a.word_vectors.iter().flatten().zip(b.word_vectors.iter().flatten()) {
        assert!((x - y).abs() < 1e-4, "{x} vs {y}");
    }
}

#[test]
fn pretrained_requires_directory() {
    let cfg = EncoderConfig { mode: EncoderMode::PretrainedTransformer, ..EncoderConfig::default() };
    assert!(matches!(TaggerModel::build(cfg, TagSet::from_classes(["idiom"]), &[]), Err(Error::Config(_))));
    let dir = tempfile::tempdir().unwrap();
    let cfg = EncoderConfig {
        mode: EncoderMode::PretrainedTransformer,
        pretrained_dir: Some(dir.path().to_path_buf()),
        ..EncoderConfig::default()
    };
    assert!(matches!(TaggerModel::build(cfg, TagSet::from_classes(["idiom"]), &[]), Err(Error::Io { .. })));
}
