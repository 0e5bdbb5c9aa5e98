use super::{check_canonical, check_resolution, SparseStructure, VoxelCoord, VoxelError};

/// Occupied cells, each carrying a `C`-channel latent vector.
///
/// Values are stored flat, `channels` floats per coordinate, in coordinate
/// order.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredLatent {
    resolution: u16,
    channels: u16,
    coords: Vec<VoxelCoord>,
    values: Vec<f32>,
}

impl StructuredLatent {
    /// Builds a latent set from unordered entries. Duplicated coordinates are
    /// rejected rather than merged since their latents may disagree.
    pub fn new(
        entries: impl IntoIterator<Item = (VoxelCoord, Vec<f32>)>,
        channels: usize,
        resolution: u16,
    ) -> Result<Self, VoxelError> {
        check_resolution(resolution)?;
        let channels_u16 = checked_channels(channels)?;
        let mut entries: Vec<(VoxelCoord, Vec<f32>)> = entries.into_iter().collect();
        for (coord, latent) in &entries {
            if !coord.in_bounds(resolution) {
                return Err(VoxelError::OutOfBounds { coord: *coord, resolution });
            }
            if latent.len() != channels {
                return Err(VoxelError::ChannelMismatch {
                    coord: *coord,
                    expected: channels,
                    actual: latent.len(),
                });
            }
            if latent.iter().any(|v| !v.is_finite()) {
                return Err(VoxelError::NonFiniteLatent(*coord));
            }
        }
        entries.sort_unstable_by_key(|(c, _)| *c);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(VoxelError::DuplicateCoord(w[0].0));
        }
        let mut coords = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len() * channels);
        for (coord, latent) in entries {
            coords.push(coord);
            values.extend_from_slice(&latent);
        }
        Ok(Self { resolution, channels: channels_u16, coords, values })
    }

    /// Accepts canonical coordinates with a flat value buffer.
    pub fn from_parts(
        coords: Vec<VoxelCoord>,
        values: Vec<f32>,
        channels: usize,
        resolution: u16,
    ) -> Result<Self, VoxelError> {
        check_resolution(resolution)?;
        let channels_u16 = checked_channels(channels)?;
        check_canonical(&coords, resolution)?;
        if values.len() != coords.len() * channels {
            return Err(VoxelError::DimensionMismatch {
                expected: coords.len() * channels,
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VoxelError::NonFiniteLatent(coords[i / channels]));
        }
        Ok(Self { resolution, channels: channels_u16, coords, values })
    }

    pub fn resolution(&self) -> u16 {
        self.resolution
    }

    pub fn channels(&self) -> usize {
        usize::from(self.channels)
    }

    pub fn coords(&self) -> &[VoxelCoord] {
        &self.coords
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn latent_at(&self, index: usize) -> &[f32] {
        let c = self.channels();
        &self.values[index * c..(index + 1) * c]
    }

    pub fn latent(&self, coord: VoxelCoord) -> Option<&[f32]> {
        self.coords.binary_search(&coord).ok().map(|i| self.latent_at(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (VoxelCoord, &[f32])> {
        self.coords.iter().copied().zip(self.values.chunks_exact(self.channels()))
    }

    /// Occupancy of this latent set.
    pub fn structure(&self) -> SparseStructure {
        SparseStructure::from_canonical(self.coords.clone(), self.resolution)
    }
}

fn checked_channels(channels: usize) -> Result<u16, VoxelError> {
    match u16::try_from(channels) {
        Ok(c) if c >= 1 => Ok(c),
        _ => Err(VoxelError::InvalidChannels(channels)),
    }
}
