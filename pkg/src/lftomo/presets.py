"""Built-in camera geometries used by the experiments, scripts and self test.

The 16 mm object is seen through 50 mm main lenses. The single-lens cameras
sit 300 mm away. The plenoptic camera works at 150 mm (magnification 0.5) so
the object depth spans a useful range of lenslet focus. Its microlens array
sits 6 mm behind the intermediate image (focused configuration), and the
main aperture is sized for matched f-numbers so lenslet images tile the
detector without overlap.
"""

from __future__ import annotations

from .camera import AngularConfig, CameraConfig, DetectorConfig, LensLayout, Pose

VOLUME_SHAPE = (32, 32, 32)
VOLUME_DELTA = (0.5, 0.5, 0.5)
DISTANCE_MM = 300.0
PLENOPTIC_DISTANCE_MM = 150.0
FOCAL_MAIN_MM = 50.0
APERTURE_MM = 16.5


def image_distance(distance: float, focal: float = FOCAL_MAIN_MM) -> float:
    return 1.0 / (1.0 / focal - 1.0 / distance)


def plenoptic_camera(k: int = 8, basis: str = "pillbox", n_lens: int = 14,
                     pixels_per_lens: int = 10, layout: str = "rect", yaw: float = 0.0,
                     distance: float = PLENOPTIC_DISTANCE_MM) -> CameraConfig:
    behind_image, d_d_mu, f_mu, pitch = 6.0, 2.0, 1.5, 0.6
    d_mu_m = image_distance(distance) + behind_image
    lens_pitch_on_detector = pitch * (d_mu_m + d_d_mu) / d_mu_m
    n_det = n_lens * pixels_per_lens
    return CameraConfig(
        type="plenoptic", focal_main_mm=FOCAL_MAIN_MM,
        D_mu_m_mm=d_mu_m, D_d_mu_mm=d_d_mu, f_mu_mm=f_mu,
        lens_layout=LensLayout(kind=layout, n_s=n_lens, n_t=n_lens, pitch_mm=pitch,
                               array_samples=8),
        detector=DetectorConfig(n_det, n_det, lens_pitch_on_detector / pixels_per_lens),
        angular=AngularConfig(k, k, basis, pitch * d_mu_m / d_d_mu),
        pose=Pose(yaw_deg=yaw, distance_mm=distance))


def single_lens_camera(yaw: float = 0.0, k: int = 8, basis: str = "pillbox",
                       n_det: int = 64, pitch: float = 0.075,
                       distance: float = DISTANCE_MM) -> CameraConfig:
    d = image_distance(distance)
    return CameraConfig(
        type="single", focal_main_mm=FOCAL_MAIN_MM, D_mm=d,
        detector=DetectorConfig(n_det, n_det, pitch),
        angular=AngularConfig(k, k, basis, APERTURE_MM),
        pose=Pose(yaw_deg=yaw, distance_mm=distance))


def three_camera_setup(k: int = 8) -> list[CameraConfig]:
    """One plenoptic camera on axis plus two single-lens cameras at +-30 degrees."""
    return [plenoptic_camera(k), single_lens_camera(30.0, k), single_lens_camera(-30.0, k)]


def tiny_plenoptic(k: int = 2, n_lens: int = 3, pixels_per_lens: int = 8,
                   layout: str = "rect", yaw: float = 0.0) -> CameraConfig:
    """Small plenoptic camera for dense-oracle and adjoint checks."""
    return plenoptic_camera(k, "pillbox", n_lens, pixels_per_lens, layout, yaw)


def tiny_single(yaw: float = 0.0, k: int = 3, n_det: int = 16) -> CameraConfig:
    return single_lens_camera(yaw, k, "pillbox", n_det, pitch=0.3)
