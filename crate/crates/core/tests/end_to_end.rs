//! Public API walk-through on a hand-built two-scenario corpus: train,
//! label, filter, fit the head, decode and round-trip a checkpoint.

use dds_core::checkpoint::Checkpoint;
use dds_core::corpus::{DialogueExample, DialogueRecord, Scenario};
use dds_core::decode::{decode, DecodeConfig, TemperatureMode};
use dds_core::diversity::{filter_extremes, label_dataset, FilterThresholds, LabelingConfig, NgramCosine};
use dds_core::head::{predict_sentence_score, train_head, HeadExample, HeadLevel, RegressionHeadParams};
use dds_core::mapping::{calibrate, MappingConfig, MappingStrategy};
use dds_core::metrics::{distinct_n, qa_metrics};
use dds_core::rng::RngState;
use dds_core::tinylm::{train_lm, LmDims, TinyLmParams, TrainConfig};
use dds_core::truncation::TruncationConfig;
use dds_core::vocab::Vocabulary;

const ITEMS: [(&str, &str); 4] = [("lamp", "red"), ("cup", "blue"), ("box", "green"), ("hat", "gold")];
const REPLIES: [&str; 4] = ["sure thing", "not really", "maybe later", "sounds fun"];
const TOPICS: [&str; 4] = ["music", "games", "food", "rain"];

fn records() -> Vec<DialogueRecord> {
    let mut out = Vec::new();
    for (item, color) in ITEMS {
        for _ in 0..4 {
            out.push(DialogueRecord {
                context: format!("color of {item} ?"),
                response: format!("it is {color} ."),
                scenario: Scenario::Qa,
            });
        }
    }
    for topic in TOPICS {
        for reply in REPLIES {
            out.push(DialogueRecord {
                context: format!("do you like {topic} ?"),
                response: reply.to_string(),
                scenario: Scenario::Chitchat,
            });
        }
    }
    out
}

fn vocab(records: &[DialogueRecord]) -> Vocabulary {
    let mut words: Vec<String> = Vec::new();
    for r in records {
        for w in r.context.split_whitespace().chain(r.response.split_whitespace()) {
            if !words.iter().any(|x| x == w) {
                words.push(w.to_string());
            }
        }
    }
    Vocabulary::new(words).unwrap()
}

fn mean_score(rows: &[(Scenario, f64)], s: Scenario) -> f64 {
    let v: Vec<f64> = rows.iter().filter(|r| r.0 == s).map(|r| r.1).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn full_flow_separates_scenarios_and_round_trips() {
    let recs = records();
    let vocab = vocab(&recs);
    let examples: Vec<DialogueExample> = recs.iter().map(|r| DialogueExample::encode(r, &vocab).unwrap()).collect();
    let dims = LmDims {
        vocab_size: vocab.len(),
        embed_dim: 12,
        window: 6,
        hidden_dim: 16,
    };
    let mut lm = TinyLmParams::init(dims, 1).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.5,
        epochs: 150,
        batch_size: 4,
        seed: 2,
        ..TrainConfig::default()
    };
    let log = train_lm(&mut lm, &examples, None, &cfg).unwrap();
    assert!(log.nll.last().unwrap() < &log.nll[0]);

    let labeling = LabelingConfig {
        m: 5,
        seed: 3,
        ..LabelingConfig::default()
    };
    let labeled = label_dataset(&lm, &vocab, &recs, &labeling, &NgramCosine::default()).unwrap();
    let scores: Vec<(Scenario, f64)> = labeled.iter().map(|e| (e.record.scenario, e.score.value())).collect();
    let (qa, cc) = (mean_score(&scores, Scenario::Qa), mean_score(&scores, Scenario::Chitchat));
    assert!(qa - cc > 0.1, "qa {qa} chitchat {cc}");

    let kept = filter_extremes(&labeled, &FilterThresholds::default());
    assert!(!kept.is_empty());
    let data: Vec<HeadExample> = kept.iter().map(|e| e.to_head_example(&vocab).unwrap()).collect();
    let mut head = RegressionHeadParams::init(dims.hidden_dim, 4);
    let head_cfg = TrainConfig {
        learning_rate: 0.2,
        epochs: 200,
        batch_size: 8,
        seed: 5,
        ..TrainConfig::default()
    };
    train_head(&mut lm, &mut head, &data, &head_cfg, HeadLevel::Sentence, None).unwrap();
    let predicted: Vec<(Scenario, f64)> = recs
        .iter()
        .map(|r| {
            let s = predict_sentence_score(&lm, &head, &vocab.encode_context(&r.context)).unwrap();
            (r.scenario, s.value())
        })
        .collect();
    assert!(mean_score(&predicted, Scenario::Qa) > mean_score(&predicted, Scenario::Chitchat));

    let mapping = MappingConfig::new(MappingStrategy::Linear);
    let labels: Vec<_> = kept.iter().map(|e| e.score).collect();
    let calibration = calibrate(&mapping, &labels).unwrap();
    let ck = Checkpoint {
        lm,
        head: Some(head),
        calibration: Some(calibration),
    };
    let restored = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
    assert_eq!(restored, ck);

    let qa_ctx = vocab.encode_context("color of cup ?");
    let cc_ctx = vocab.encode_context("do you like rain ?");
    let rng = RngState::new(9);
    for mode in TemperatureMode::ALL {
        let config = if mode == TemperatureMode::Fixed {
            DecodeConfig::fixed(TruncationConfig::DEFAULT_TOP_P)
        } else {
            DecodeConfig::dds(TruncationConfig::DEFAULT_TOP_P, mode, mapping, calibration)
        };
        let a = decode(&ck.lm, ck.head.as_ref(), &cc_ctx, &config, &rng).unwrap();
        let b = decode(&restored.lm, restored.head.as_ref(), &cc_ctx, &config, &rng).unwrap();
        assert_eq!(a, b);
        let tokens: Vec<Vec<usize>> = a.iter().map(|r| r.tokens.clone()).collect();
        assert!(distinct_n(&tokens, 1) > 0.0);

        let answers = decode(&ck.lm, ck.head.as_ref(), &qa_ctx, &config, &rng).unwrap();
        let reference: Vec<&str> = "it is blue .".split_whitespace().collect();
        let texts: Vec<String> = answers.iter().map(|r| vocab.decode(&r.tokens)).collect();
        let pairs: Vec<(Vec<&str>, Vec<&str>)> = texts
            .iter()
            .map(|t| (t.split_whitespace().collect(), reference.clone()))
            .collect();
        let m = qa_metrics(&pairs);
        assert!(m["f1"] > 0.5, "{mode:?} f1 {}", m["f1"]);
    }
}
