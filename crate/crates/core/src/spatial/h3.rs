use std::str::FromStr;

use h3o::{CellIndex as H3Cell, LatLng, Resolution as H3Res};

use super::{CellId, LatLon, Resolution, SpatialError};

fn h3_res(res: Resolution) -> H3Res {
    match res {
        Resolution::Fine => H3Res::Ten,
        Resolution::Coarse => H3Res::Eight,
    }
}

fn decode(cell: &CellId) -> Result<H3Cell, SpatialError> {
    let c = H3Cell::from_str(&cell.token).map_err(|_| SpatialError::UnknownCell(cell.token.clone()))?;
    if c.resolution() != h3_res(cell.resolution) {
        return Err(SpatialError::UnknownCell(cell.token.clone()));
    }
    Ok(c)
}

fn encode(c: H3Cell, resolution: Resolution) -> CellId {
    CellId {
        resolution,
        token: c.to_string(),
    }
}

pub(super) fn fine_cell(p: LatLon) -> Result<CellId, SpatialError> {
    let ll = LatLng::new(p.lat, p.lon).map_err(|_| SpatialError::BadCoordinate { lat: p.lat, lon: p.lon })?;
    Ok(encode(ll.to_cell(H3Res::Ten), Resolution::Fine))
}

pub(super) fn parent(fine: &CellId) -> Result<CellId, SpatialError> {
    let c = decode(fine)?;
    let p = c
        .parent(H3Res::Eight)
        .ok_or_else(|| SpatialError::UnknownCell(fine.token.clone()))?;
    Ok(encode(p, Resolution::Coarse))
}

pub(super) fn centroid(cell: &CellId) -> Result<LatLon, SpatialError> {
    let ll = LatLng::from(decode(cell)?);
    Ok(LatLon::new(ll.lat(), ll.lng()))
}

pub(super) fn area_m2(cell: &CellId) -> Result<f64, SpatialError> {
    Ok(decode(cell)?.area_m2())
}

pub(super) fn boundary(cell: &CellId) -> Result<Vec<LatLon>, SpatialError> {
    Ok(decode(cell)?.boundary().iter().map(|ll| LatLon::new(ll.lat(), ll.lng())).collect())
}
