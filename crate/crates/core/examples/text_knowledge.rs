//! Annotations to sub-sentences to [CLS] and word embeddings.

use lghoi::detection::BBox;
use lghoi::text::{encode_text, serialize, StubEncoder, Tokenizer, TripletAnnotation, Vocabulary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vocab = Vocabulary {
        verbs: vec!["hold".into(), "ride".into(), "feed".into()],
        objects: vec!["person".into(), "horse".into(), "cup".into()],
    };
    let person = BBox::new(0.1, 0.1, 0.5, 0.9)?;
    let anns = vec![
        TripletAnnotation::new(person, BBox::new(0.3, 0.4, 0.9, 0.9)?, 1, vec![1, 2])?,
        TripletAnnotation::new(person, BBox::new(0.4, 0.3, 0.5, 0.4)?, 2, vec![0])?,
    ];
    let text = serialize(&anns, &vocab)?;
    println!("{}\n", text.joined);

    let tok = Tokenizer::new(&vocab);
    let enc = StubEncoder::new(tok.vocab_size(), 16, 16, 0);
    for s in &text.sub_sentences {
        println!("{s:<22} -> {:?}", tok.tokenize(s)?);
    }
    let k = encode_text(&text, &tok, &enc)?;
    let cls = k.cls_per_annotation(anns.len())?;
    println!(
        "\n{} interactions, cls {:?}, words {:?}, per-annotation targets {:?}",
        k.num_interactions(),
        k.cls_embeddings.shape(),
        k.word_embeddings.shape(),
        cls.shape()
    );
    Ok(())
}
