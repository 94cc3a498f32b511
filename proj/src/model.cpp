#include <loco/model.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace loco
{

namespace
{

constexpr double kRotationTol = 1e-9;
constexpr double kTimeTol = 1e-9;

} // namespace

void ContactPatch::validate() const
{
    const Mat3& r = pose.rotation;
    if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > kRotationTol
        || std::abs(r.determinant() - 1.0) > kRotationTol)
    {
        throw std::invalid_argument("contact patch '" + name + "': rotation not orthonormal");
    }
    for (const auto& v : vertices)
    {
        if (std::abs(v.z()) > kRotationTol)
        {
            throw std::invalid_argument("contact patch '" + name
                                        + "': vertices must lie in the patch plane");
        }
    }
}

void Footstep::validate() const
{
    if (!(activation_time < deactivation_time))
    {
        throw std::invalid_argument("footstep '" + contact_name
                                    + "': activation must precede deactivation");
    }
}

void GaitTimeline::validate() const
{
    for (std::size_t i = 0; i < phases.size(); ++i)
    {
        const GaitPhase& p = phases[i];
        if (!(p.t0 < p.t1))
        {
            throw std::invalid_argument("timeline phase with empty interval");
        }
        if (i > 0 && std::abs(phases[i - 1].t1 - p.t0) > kTimeTol)
        {
            throw std::invalid_argument("timeline phases not contiguous");
        }
        for (int c = 0; c < kNumContacts; ++c)
        {
            if (p.flags.sigma[static_cast<std::size_t>(c)]
                < p.flags.gamma[static_cast<std::size_t>(c)])
            {
                throw std::invalid_argument("timeline violates sigma >= gamma");
            }
        }
    }
}

void RobotParams::validate() const
{
    if (!(mass > 0.0))
    {
        throw std::invalid_argument("robot mass must be positive");
    }
    if (!(friction_mu > 0.0))
    {
        throw std::invalid_argument("friction coefficient must be positive");
    }
    if (!(com_z_min < com_z_max))
    {
        throw std::invalid_argument("CoM height band must have positive width");
    }
}

void ReferenceBundle::validate() const
{
    if (!(sampling_period > 0.0))
    {
        throw std::invalid_argument("reference bundle sampling period must be positive");
    }
    const std::size_t n = com_ref.size();
    if (h_ang_ref.size() != n || joint_postural.size() != n || nominal_force_z.size() != n)
    {
        throw std::invalid_argument("reference bundle sequences must have equal length");
    }
    for (const auto& f : footsteps)
    {
        f.validate();
    }
}

ContactFlags contact_flags_at(const GaitTimeline& timeline, double t)
{
    if (timeline.phases.empty() || t < timeline.span_begin() - kTimeTol
        || t >= timeline.span_end())
    {
        throw std::out_of_range("time " + std::to_string(t) + " outside timeline span");
    }
    for (const auto& p : timeline.phases)
    {
        if (t < p.t1)
        {
            return p.flags;
        }
    }
    return timeline.phases.back().flags;
}

GaitTimeline derive_timeline(const std::vector<Footstep>& footsteps, double lead_window,
                             double horizon_end)
{
    if (lead_window < 0.0)
    {
        throw std::invalid_argument("lead window must be non-negative");
    }

    std::array<std::vector<const Footstep*>, kNumContacts> per_contact;
    for (const auto& f : footsteps)
    {
        f.validate();
        const int c = contact_index(f.contact_name);
        if (c < 0)
        {
            throw std::invalid_argument("unknown contact name '" + f.contact_name + "'");
        }
        per_contact[static_cast<std::size_t>(c)].push_back(&f);
    }
    for (auto& list : per_contact)
    {
        std::sort(list.begin(), list.end(), [](const Footstep* a, const Footstep* b) {
            return a->activation_time < b->activation_time;
        });
        for (std::size_t i = 1; i < list.size(); ++i)
        {
            if (list[i]->activation_time < list[i - 1]->deactivation_time - kTimeTol)
            {
                throw std::invalid_argument("overlapping footsteps for contact '"
                                            + list[i]->contact_name + "'");
            }
        }
    }

    double end = horizon_end;
    std::set<double> events{0.0};
    for (const auto& f : footsteps)
    {
        end = std::max(end, f.deactivation_time);
        events.insert(std::max(0.0, f.activation_time));
        events.insert(std::max(0.0, f.activation_time - lead_window));
        events.insert(std::max(0.0, f.deactivation_time));
    }
    end = std::max(end, 0.0) + kTimeTol;
    events.insert(end);

    // collapse events closer than the time tolerance
    std::vector<double> edges;
    for (double e : events)
    {
        if (e > end)
        {
            continue;
        }
        if (edges.empty() || e - edges.back() > kTimeTol)
        {
            edges.push_back(e);
        }
    }
    if (edges.size() < 2)
    {
        edges = {0.0, end};
    }

    const auto flags_at = [&](double t) {
        ContactFlags flags;
        for (int c = 0; c < kNumContacts; ++c)
        {
            for (const Footstep* f : per_contact[static_cast<std::size_t>(c)])
            {
                const auto ci = static_cast<std::size_t>(c);
                if (t >= f->activation_time - kTimeTol && t < f->deactivation_time - kTimeTol)
                {
                    flags.gamma[ci] = 1;
                    flags.sigma[ci] = 1;
                }
                else if (t >= f->activation_time - lead_window - kTimeTol
                         && t < f->activation_time - kTimeTol)
                {
                    flags.sigma[ci] = 1;
                }
            }
        }
        return flags;
    };

    GaitTimeline timeline;
    timeline.lead_window = lead_window;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    {
        GaitPhase phase;
        phase.t0 = edges[i];
        phase.t1 = edges[i + 1];
        phase.flags = flags_at(0.5 * (phase.t0 + phase.t1));
        if (!timeline.phases.empty()
            && timeline.phases.back().flags.gamma == phase.flags.gamma
            && timeline.phases.back().flags.sigma == phase.flags.sigma)
        {
            timeline.phases.back().t1 = phase.t1;
        }
        else
        {
            timeline.phases.push_back(phase);
        }
    }
    timeline.validate();
    return timeline;
}

const std::array<std::string, kNumContacts>& contact_names()
{
    static const std::array<std::string, kNumContacts> names{"left_foot", "right_foot"};
    return names;
}

int contact_index(const std::string& name)
{
    const auto& names = contact_names();
    for (int i = 0; i < kNumContacts; ++i)
    {
        if (names[static_cast<std::size_t>(i)] == name)
        {
            return i;
        }
    }
    return -1;
}

} // namespace loco
