//! Export a labeling session and import it back against a store.

use boxsearch::query::{export_session, import_session, ModelKind, QuerySession, SearchRequest};
use boxsearch::store::Fingerprint;

fn main() -> boxsearch::error::Result<()> {
    let request = SearchRequest {
        n_random_negatives: 200,
        seed: 17,
        ..SearchRequest::new(vec![12, 40, 41], vec![3, 99], ModelKind::DbranchEns)
    };
    let ours = Fingerprint(0x5eed_cafe);
    let doc = export_session(&QuerySession::from_request(&request, Some(ours)));
    println!("{doc}");

    let back = import_session(&doc, 1_000, ours)?;
    println!("same store: restored {} labels, warnings {:?}", back.session.positives.len() + back.session.negatives.len(), back.warnings);
    assert_eq!(back.session.to_request(), request);

    let other = import_session(&doc, 1_000, Fingerprint(1))?;
    println!("other store: warnings {:?}", other.warnings);

    match import_session(&doc, 50, ours) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("store with 50 rows: {e}"),
    }
    Ok(())
}
