use serde::ser::Serializer;

use crate::Point;

pub(crate) fn point<S: Serializer>(p: &Point, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(p.iter())
}
