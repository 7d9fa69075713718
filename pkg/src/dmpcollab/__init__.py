"""DMP-based reference model with EKF target/time-scaling estimation for
human-robot collaborative object transfer, plus a simulated-human test bed.

Modules
-------
quat          unit quaternion algebra, log/exp, rate relations
dmp           position and anchored-orientation DMPs, LWR training, rollout
reference     force-shaped DMP reference model
ekf           constrained fading-memory EKF for target and time scaling
sim           closed-loop episodes, admittance baseline, boundedness suite
config, io    experiment configuration and file formats
verify, cli   invariant suites and the ``dmpcollab`` command line
"""
__version__ = "0.1.0"
