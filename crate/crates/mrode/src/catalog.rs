//! Problem and method catalogs (placeholder).
