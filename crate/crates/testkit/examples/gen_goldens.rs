//! Regenerates the golden files under `crates/testkit/data/`. Run from the
//! workspace root after an intentional format change, then review the diff:
//!
//! ```sh
//! cargo run -p bigsur-testkit --example gen_goldens
//! ```

fn main() {
    let store = bigsur_core::store::Store::in_memory("berkeley");
    std::fs::write("crates/testkit/data/schema_golden.sql", store.export_sql(true)).unwrap();

    let (store, catalog) = bigsur_testkit::fixture::site_catalog("berkeley");
    let (_raw, _l1, l2) = bigsur_testkit::fixture::build_chain(&catalog);
    let report = bigsur_core::lineage::defensibility_report(&store, &l2).unwrap();
    std::fs::write("crates/testkit/data/defensibility_chain.txt", &report).unwrap();
    println!("goldens regenerated");
}
