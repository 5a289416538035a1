use idiomspan::corpus::{generate_synthetic_corpus, read_corpus, write_corpus, SynthesisConfig};
use idiomspan::encoder::{EncoderConfig, TaggerModel};
use idiomspan::harness::tagset_for;

fn small() -> idiomspan::corpus::DatasetSplit {
    generate_synthetic_corpus(&SynthesisConfig {
        train_count: 12,
        dev_count: 4,
        test_count: 4,
        seed: 3,
        ..SynthesisConfig::default()
    })
    .unwrap()
}

#[test]
fn corpus_files_round_trip_in_both_formats() {
    let data = small();
    let dir = tempfile::tempdir().unwrap();
    for name in ["train.conll", "train.jsonl"] {
        let path = dir.path().join(name);
        write_corpus(&path, &data.train).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), data.train, "{name}");
    }
}

#[test]
fn checkpoint_reload_predicts_identically() {
    let data = small();
    let cfg = EncoderConfig {
        hidden_size: 8,
        heads: 2,
        intermediate_size: 16,
        layers: 1,
        ..EncoderConfig::default()
    };
    let model = TaggerModel::tiny(cfg, tagset_for(&data), &data.train).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let back = TaggerModel::load(&path).unwrap();
    for s in &data.test {
        assert_eq!(back.predict(s).unwrap(), model.predict(s).unwrap());
        assert_eq!(back.encode(s).unwrap().word_vectors, model.encode(s).unwrap().word_vectors);
    }
}
