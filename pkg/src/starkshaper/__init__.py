"""starkshaper: compile target AC Stark-shift patterns into deformable-mirror
pulse schedules for a rotating planar ion crystal, and verify the compiled
schedule by exact integration of the per-ion spin phase."""

__version__ = "0.1.0"
