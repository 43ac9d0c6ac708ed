mod common;

use std::io::BufReader;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tarjama_core::corpus::{read_jsonl, write_jsonl};
use tarjama_core::{
    decompose, parse_corpus, reconstruct, ChunkPlan, ChunkPolicy, Conversation, CorpusError, ParseMode,
    PartKind, Tokenizer, TranslatedUnit, TranslationUnit,
};

fn corpus_bytes(conversations: &[Conversation]) -> Vec<u8> {
    let mut out = Vec::new();
    write_jsonl(&mut out, conversations).unwrap();
    out
}

#[test]
fn identity_roundtrip_is_byte_exact_on_1000_conversations() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let corpus = common::random_corpus(&mut rng, 1000);
    let source = corpus_bytes(&corpus);
    let parsed = parse_corpus(BufReader::new(source.as_slice()), ParseMode::Strict).unwrap();
    assert_eq!(parsed.conversations.len(), 1000);

    let tok = Tokenizer::builtin();
    let policy = ChunkPolicy::default();
    let mut rebuilt = Vec::new();
    let (mut think_units, mut multi_chunk_parts) = (0, 0);
    for conv in &parsed.conversations {
        let plan = ChunkPlan::with_chunker(conv, &tok, &policy).unwrap();
        let units = decompose(conv, &plan).unwrap();
        think_units += units.iter().filter(|u| u.part_type == PartKind::Think).count();
        multi_chunk_parts += units.iter().filter(|u| u.chunk_index == 1).count();
        // Through the wire format and shuffled.
        let mut wire = Vec::new();
        write_jsonl(&mut wire, units.into_iter().map(|u| u.identity("identity")).collect::<Vec<_>>().iter()).unwrap();
        let mut back: Vec<TranslatedUnit> = read_jsonl(BufReader::new(wire.as_slice())).unwrap();
        back.shuffle(&mut rng);
        rebuilt.push(reconstruct(&back).unwrap());
    }
    assert!(think_units > 100, "{think_units}");
    assert!(multi_chunk_parts > 50, "{multi_chunk_parts}");
    assert_eq!(corpus_bytes(&rebuilt), source);
}

#[test]
fn dropping_any_unit_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let tok = Tokenizer::builtin();
    let policy = ChunkPolicy::new(20, 5, 25).unwrap();
    for conv in common::random_corpus(&mut rng, 30) {
        let plan = ChunkPlan::with_chunker(&conv, &tok, &policy).unwrap();
        let units: Vec<TranslationUnit> = decompose(&conv, &plan).unwrap();
        let translated: Vec<TranslatedUnit> = units.into_iter().map(|u| u.identity("t")).collect();
        for skip in 0..translated.len() {
            let mut partial = translated.clone();
            let removed = partial.remove(skip);
            if partial.is_empty() {
                continue;
            }
            match reconstruct(&partial) {
                Err(CorpusError::IncompleteUnits { missing, .. }) => {
                    let key = (removed.unit.message_index, removed.unit.part_index, removed.unit.chunk_index);
                    // A whole missing part or message is reported at chunk 0.
                    assert!(
                        missing.contains(&key) || missing.contains(&(key.0, key.1, 0)),
                        "{missing:?} lacks {key:?}"
                    );
                }
                Ok(c) => panic!("dropping {} went unnoticed: {c:?}", removed.unit.key()),
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }
}
