"""Forward scattering: BEM reference fields, asymptotic fields and MSR synthesis."""
