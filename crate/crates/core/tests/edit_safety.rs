mod common;

use common::edits::{case, run_case};
use ilcl_core::schema::{builtin, parse_schema};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn rejected_content_never_reaches_the_document(c in case()) {
        let schema = parse_schema("roomworld", builtin::ROOMWORLD).unwrap();
        run_case(&schema, &c)?;
    }
}
