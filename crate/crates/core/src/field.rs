//! Evaluable fields over the plane.

pub type Point = [f64; 2];

/// A (vector-valued) function on R² with optional exact derivatives.
///
/// `grad` is row-major `components × 2`: `grad[2 * i + j] = ∂u_i/∂x_j`.
pub trait Field: Sync {
    fn components(&self) -> usize;

    fn eval_into(&self, x: Point, value: &mut [f64]);

    /// Value and gradient. The default uses central differences.
    fn jet_into(&self, x: Point, value: &mut [f64], grad: &mut [f64]) {
        central_difference_jet(self.components(), |p, out| self.eval_into(p, out), x, value, grad)
    }
}

fn central_difference_jet(c: usize, eval: impl Fn(Point, &mut [f64]), x: Point, value: &mut [f64], grad: &mut [f64]) {
    const STEP: f64 = 1e-6;
    eval(x, value);
    let mut plus = vec![0.0; c];
    let mut minus = vec![0.0; c];
    for j in 0..2 {
        let mut xp = x;
        let mut xm = x;
        xp[j] += STEP;
        xm[j] -= STEP;
        eval(xp, &mut plus);
        eval(xm, &mut minus);
        for i in 0..c {
            grad[2 * i + j] = (plus[i] - minus[i]) / (2.0 * STEP);
        }
    }
}

/// Closure-backed field, optionally with an exact gradient.
pub struct FnField<F, G = fn(Point, &mut [f64])> {
    components: usize,
    value: F,
    grad: Option<G>,
}

impl<F> FnField<F>
where
    F: Fn(Point, &mut [f64]) + Sync,
{
    pub fn new(components: usize, value: F) -> Self {
        FnField { components, value, grad: None }
    }
}

impl<F, G> FnField<F, G>
where
    F: Fn(Point, &mut [f64]) + Sync,
    G: Fn(Point, &mut [f64]) + Sync,
{
    pub fn with_gradient(components: usize, value: F, grad: G) -> Self {
        FnField { components, value, grad: Some(grad) }
    }
}

impl<F, G> Field for FnField<F, G>
where
    F: Fn(Point, &mut [f64]) + Sync,
    G: Fn(Point, &mut [f64]) + Sync,
{
    fn components(&self) -> usize {
        self.components
    }

    fn eval_into(&self, x: Point, value: &mut [f64]) {
        (self.value)(x, value)
    }

    fn jet_into(&self, x: Point, value: &mut [f64], grad: &mut [f64]) {
        match &self.grad {
            Some(g) => {
                (self.value)(x, value);
                g(x, grad)
            }
            None => central_difference_jet(self.components, &self.value, x, value, grad),
        }
    }
}

/// Spatially constant field.
pub struct ConstantField(pub Vec<f64>);

impl Field for ConstantField {
    fn components(&self) -> usize {
        self.0.len()
    }

    fn eval_into(&self, _x: Point, value: &mut [f64]) {
        value.copy_from_slice(&self.0);
    }

    fn jet_into(&self, _x: Point, value: &mut [f64], grad: &mut [f64]) {
        value.copy_from_slice(&self.0);
        grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Scalar convenience wrapper: evaluates component 0.
pub fn scalar_at(field: &dyn Field, x: Point) -> f64 {
    let mut v = [0.0; 4];
    let c = field.components();
    field.eval_into(x, &mut v[..c]);
    v[0]
}

/// `a · field`, used to check linearity of estimators.
pub struct Scaled<'a> {
    pub factor: f64,
    pub inner: &'a dyn Field,
}

impl Field for Scaled<'_> {
    fn components(&self) -> usize {
        self.inner.components()
    }

    fn eval_into(&self, x: Point, value: &mut [f64]) {
        self.inner.eval_into(x, value);
        value.iter_mut().for_each(|v| *v *= self.factor);
    }

    fn jet_into(&self, x: Point, value: &mut [f64], grad: &mut [f64]) {
        self.inner.jet_into(x, value, grad);
        value.iter_mut().for_each(|v| *v *= self.factor);
        grad.iter_mut().for_each(|v| *v *= self.factor);
    }
}
