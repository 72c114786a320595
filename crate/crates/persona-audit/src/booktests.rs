//! Book chapters are compiled as doctests; shims land with the book.
